"""Deterministic, cross-platform randomness.

Every stochastic step in this package (degradation sampling, dropout masks,
weight init) draws from an explicit :class:`RngState`; there is no global
seed.  The generator is xoshiro256** 1.0 seeded through SplitMix64, chosen
because both algorithms are tiny, bit-exact and easy to re-implement in any
language, so every experiment here can be replayed elsewhere.

Scalar draws follow the reference algorithms word for word.  Bulk draws
(`uniform_array`, `gaussian_array`) consume exactly one generator word as a
sub-seed and expand it through a vectorized SplitMix64 counter stream, which
keeps mask generation off the slow scalar path while staying reproducible.

A single RngState must not be shared across threads.  For parallel work,
give each unit its own stream via :func:`derive_stream`.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # SplitMix64 increment (golden-ratio odd constant)
_TWO53 = float(1 << 53)


def _splitmix64(x: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (output, advanced state)."""
    x = (x + _GAMMA) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64, x


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class RngState:
    """xoshiro256** generator state plus the seed it came from.

    Mutable: every draw advances the four state words in place.
    """

    __slots__ = ("s0", "s1", "s2", "s3", "origin_seed", "_gauss_cache")

    def __init__(self, words: tuple[int, int, int, int], origin_seed: int):
        self.s0, self.s1, self.s2, self.s3 = words
        self.origin_seed = origin_seed
        self._gauss_cache: float | None = None

    @property
    def words(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def __repr__(self) -> str:
        return (
            f"RngState(words=({self.s0:#018x}, {self.s1:#018x}, "
            f"{self.s2:#018x}, {self.s3:#018x}), seed={self.origin_seed:#x})"
        )


def seed_rng(seed: int) -> RngState:
    """Expand a 64-bit seed into a xoshiro256** state via SplitMix64.

    Four consecutive SplitMix64 outputs fill the state words; this is the
    seeding procedure recommended by the generator's authors and guarantees
    a never-all-zero state.
    """
    seed &= _MASK64
    x = seed
    words = []
    for _ in range(4):
        w, x = _splitmix64(x)
        words.append(w)
    return RngState(tuple(words), seed)


def next_u64(state: RngState) -> int:
    """Next word of the xoshiro256** sequence; advances the state."""
    s0, s1, s2, s3 = state.s0, state.s1, state.s2, state.s3
    result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
    t = (s1 << 17) & _MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state.s0, state.s1, state.s2, state.s3 = s0, s1, s2, s3
    return result


def next_f64(state: RngState) -> float:
    """Uniform draw in [0, 1): top 53 bits of the next word times 2^-53."""
    return (next_u64(state) >> 11) / _TWO53


def next_gaussian(state: RngState) -> float:
    """Standard normal draw via Box-Muller.

    Consumes exactly two generator words per pair of variates and caches
    the second, so consecutive calls alternate between fresh pairs and the
    cached value.
    """
    if state._gauss_cache is not None:
        z = state._gauss_cache
        state._gauss_cache = None
        return z
    # Uniforms in (0, 1] so the log is finite.
    u1 = ((next_u64(state) >> 11) + 1) / _TWO53
    u2 = ((next_u64(state) >> 11) + 1) / _TWO53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    state._gauss_cache = float(r * np.sin(theta))
    return float(r * np.cos(theta))


def mix_seed(base: int, index: int) -> int:
    """One SplitMix64 round of base XOR (index * odd constant).

    Used to key independent sub-streams off a common seed.
    """
    x = (base ^ ((index * _GAMMA) & _MASK64)) & _MASK64
    out, _ = _splitmix64(x)
    return out


def derive_stream(base: int, index: int) -> RngState:
    """Independent stream number `index` keyed off seed `base`.

    Streams for distinct indices are distinct, and a stream depends only on
    (base, index), never on how many other streams were created, so batch
    work can be processed in any order.
    """
    return seed_rng(mix_seed(base, index))


# ---------------------------------------------------------------------------
# Bulk draws.  One xoshiro word seeds a vectorized SplitMix64 counter stream;
# numpy does the rest.  uint64 overflow wraps, which is exactly what the
# algorithm requires.
# ---------------------------------------------------------------------------


def _splitmix_bulk(sub_seed: int, n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (np.uint64(sub_seed) + (np.arange(1, n + 1, dtype=np.uint64)) * np.uint64(_GAMMA))
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def uniform_array(state: RngState, n: int) -> np.ndarray:
    """n uniforms in [0, 1) as float64, consuming one word of `state`."""
    sub = next_u64(state)
    words = _splitmix_bulk(sub, n)
    return ((words >> np.uint64(11)).astype(np.float64)) / _TWO53


def gaussian_array(state: RngState, n: int) -> np.ndarray:
    """n standard normals (bulk Box-Muller), consuming one word of `state`."""
    m = (n + 1) // 2
    sub = next_u64(state)
    words = _splitmix_bulk(sub, 2 * m)
    u = ((words >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53  # (0, 1]
    u1, u2 = u[:m], u[m:]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
    return z[:n]
