"""Procedural HR image corpus.

Deterministic stand-in for a photographic training set: each image mixes
smooth color gradients, oriented sinusoidal texture, and sharp-edged
rectangles/disks, so super-resolution has both low- and high-frequency
content to learn and JPEG artifacts have edges to ring against.
"""

from __future__ import annotations

import numpy as np

from .rng import RngState, derive_stream, gaussian_array, next_f64, uniform_array


def _unit(img):
    lo = img.min()
    hi = img.max()
    if hi - lo < 1e-12:
        return np.full_like(img, 0.5)
    return 0.02 + 0.96 * (img - lo) / (hi - lo)


def make_image(rng: RngState, size: int = 96) -> np.ndarray:
    """One (3, size, size) image in [0.02, 0.98], fully determined by rng."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.zeros((3, size, size))

    # plane gradient base per channel
    for c in range(3):
        ang = next_f64(rng) * 2 * np.pi
        img[c] = 0.6 * (np.cos(ang) * xx + np.sin(ang) * yy)

    # oriented sinusoids shared across channels with random color weights
    n_waves = 3 + int(next_f64(rng) * 3)
    for _ in range(n_waves):
        freq = 2.0 + next_f64(rng) * 10.0
        ang = next_f64(rng) * np.pi
        phase = next_f64(rng) * 2 * np.pi
        amp = 0.1 + 0.25 * next_f64(rng)
        wave = np.sin(2 * np.pi * freq * (np.cos(ang) * xx + np.sin(ang) * yy) + phase)
        color = uniform_array(rng, 3)
        img += amp * color[:, None, None] * wave[None, :, :]

    # sharp-edged rectangles and disks
    n_shapes = 4 + int(next_f64(rng) * 4)
    for _ in range(n_shapes):
        cy = next_f64(rng)
        cx = next_f64(rng)
        h = 0.08 + 0.25 * next_f64(rng)
        w = 0.08 + 0.25 * next_f64(rng)
        color = uniform_array(rng, 3) * 1.2 - 0.1
        if next_f64(rng) < 0.5:
            mask = (np.abs(yy - cy) < h / 2) & (np.abs(xx - cx) < w / 2)
        else:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < (h / 2) ** 2
        for c in range(3):
            img[c][mask] = 0.65 * color[c] + 0.35 * img[c][mask]

    # faint pixel texture so no region is exactly flat
    img += 0.02 * gaussian_array(rng, img.size).reshape(img.shape)
    return _unit(img)


def make_corpus(n: int, base_seed: int, size: int = 96) -> list:
    """n images, each from its own derived stream, so subsets agree with
    full runs image-by-image."""
    return [make_image(derive_stream(base_seed, i), size) for i in range(n)]
