"""Seeded image degradations: Gaussian blur, resampling, color noise, and a
baseline JPEG round-trip, composed either as fixed test pipelines
(clean/b/n/j combinations) or as randomly sampled two-stage train pipelines.

All functions operate on a single image shaped (3, H, W) with float values
in [0, 1]; quantization to 8 bits happens only at file I/O.  Every random
choice comes from an explicit RngState, so a (seed, image) pair always
yields the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .rng import RngState, gaussian_array, next_f64

KINDS = ("clean", "b", "n", "j", "b+n", "b+j", "n+j", "b+n+j")

_KIND_ALIASES = {"blur": "b", "noise": "n", "jpeg": "j"}

RESIZE_MODES = ("nearest", "bilinear", "bicubic")


def normalize_kind(kind: str) -> str:
    """Map long-form degradation names (blur+noise, ...) onto the short
    b/n/j codes; raises on anything unknown."""
    parts = [p.strip() for p in kind.strip().lower().split("+")]
    parts = [_KIND_ALIASES.get(p, p) for p in parts]
    if parts == ["clean"]:
        return "clean"
    joined = "+".join(parts)
    if joined not in KINDS:
        raise ValueError(f"unknown degradation kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    return joined


# ---------------------------------------------------------------------------
# Blur
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlurKernel:
    size: int
    weights: np.ndarray
    sigma_x: float
    sigma_y: float
    theta: float


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float | None = None, theta: float = 0.0) -> BlurKernel:
    """Rotated anisotropic Gaussian, normalized to sum 1.

    The grid coordinate (u, v) is rotated by theta before being scaled by
    the two sigmas, so theta=0 keeps sigma_x along the image x axis.
    """
    if size % 2 == 0 or size < 3:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")
    if sigma_y is None:
        sigma_y = sigma_x
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError(f"kernel sigmas must be positive, got ({sigma_x}, {sigma_y})")
    r = size // 2
    v, u = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    ct, st = math.cos(theta), math.sin(theta)
    ur = ct * u + st * v
    vr = -st * u + ct * v
    w = np.exp(-(ur**2 / (2 * sigma_x**2) + vr**2 / (2 * sigma_y**2)))
    w /= w.sum()
    return BlurKernel(size=size, weights=w, sigma_x=sigma_x, sigma_y=float(sigma_y), theta=theta)


def apply_blur(img: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Per-channel 2-D correlation with reflect-101 borders; same size out."""
    C, H, W = img.shape
    if kernel.size > min(H, W):
        raise ValueError(f"kernel size {kernel.size} exceeds image min dimension {min(H, W)}")
    r = kernel.size // 2
    padded = np.pad(img, ((0, 0), (r, r), (r, r)), mode="reflect")
    flipped = kernel.weights[::-1, ::-1]
    return fftconvolve(padded, flipped[None, :, :], mode="valid")


# ---------------------------------------------------------------------------
# Resize
# ---------------------------------------------------------------------------


def _keys_weight(t: float) -> float:
    # Keys cubic with a = -0.5, 4-tap support
    t = abs(t)
    if t <= 1.0:
        return 1.5 * t**3 - 2.5 * t**2 + 1.0
    if t < 2.0:
        return -0.5 * (t**3 - 5.0 * t**2 + 8.0 * t - 4.0)
    return 0.0


def _interp_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """Dense (n_out, n_in) row-stochastic interpolation matrix with
    half-pixel-centered source coordinates and edge clamp."""
    scale = n_out / n_in
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) / scale - 0.5
        if mode == "bilinear":
            i0 = math.floor(src)
            frac = src - i0
            taps = ((i0, 1.0 - frac), (i0 + 1, frac))
        else:
            i0 = math.floor(src)
            taps = [(j, _keys_weight(src - j)) for j in range(i0 - 1, i0 + 3)]
        for j, w in taps:
            m[i, min(max(j, 0), n_in - 1)] += w
    return m


def resize_to(img: np.ndarray, out_h: int, out_w: int, mode: str) -> np.ndarray:
    """Resample to an explicit target size; modes: nearest, bilinear, bicubic."""
    if mode not in RESIZE_MODES:
        raise ValueError(f"unknown resize mode {mode!r}; valid modes: {', '.join(RESIZE_MODES)}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate resize target {out_h}x{out_w}")
    C, H, W = img.shape
    if mode == "nearest":
        ih = np.minimum(((np.arange(out_h) + 0.5) * (H / out_h)).astype(np.int64), H - 1)
        iw = np.minimum(((np.arange(out_w) + 0.5) * (W / out_w)).astype(np.int64), W - 1)
        return img[:, ih[:, None], iw[None, :]]
    mh = _interp_matrix(H, out_h, mode)
    mw = _interp_matrix(W, out_w, mode)
    t = np.tensordot(img, mw, axes=([2], [1]))  # (C, H, out_w)
    return np.tensordot(t, mh, axes=([1], [1])).transpose(0, 2, 1)


def resize(img: np.ndarray, scale: float, mode: str) -> np.ndarray:
    """Resample by a scale factor; output dims are round(dim * scale)."""
    if scale <= 0:
        raise ValueError(f"resize scale must be positive, got {scale}")
    C, H, W = img.shape
    out_h = int(math.floor(H * scale + 0.5))
    out_w = int(math.floor(W * scale + 0.5))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate resize: {H}x{W} at scale {scale}")
    return resize_to(img, out_h, out_w, mode)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


def add_gaussian_noise(img: np.ndarray, sigma255: float, rng: RngState) -> np.ndarray:
    """i.i.d. color Gaussian noise with sigma given on the 0-255 scale,
    clamped back to [0, 1]."""
    if sigma255 < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma255}")
    if sigma255 == 0:
        return img.copy()
    z = gaussian_array(rng, img.size).reshape(img.shape)
    return np.clip(img + (sigma255 / 255.0) * z, 0.0, 1.0)


# ---------------------------------------------------------------------------
# JPEG round-trip (baseline model: BT.601 full range, 4:4:4, Annex-K tables)
# ---------------------------------------------------------------------------

_LUMA_Q = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)

_CHROMA_Q = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)

_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)
_YCC_OFFSET = np.array([0.0, 128.0, 128.0])


def _dct_matrix() -> np.ndarray:
    d = np.zeros((8, 8))
    for k in range(8):
        c = math.sqrt(1.0 / 8.0) if k == 0 else math.sqrt(2.0 / 8.0)
        for n in range(8):
            d[k, n] = c * math.cos((2 * n + 1) * k * math.pi / 16.0)
    return d


_DCT = _dct_matrix()


def scaled_quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling in integer arithmetic: scale = 5000/q below 50,
    else 200 - 2q; entries floor((Q*scale + 50)/100), clamped to [1, 255]."""
    if not 1 <= quality <= 100:
        raise ValueError(f"jpeg quality must be in [1, 100], got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((base * scale + 50) // 100, 1, 255)


def _blockwise_quantize(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    H, W = plane.shape
    blocks = plane.reshape(H // 8, 8, W // 8, 8)
    coef = np.einsum("ki,hiwj,lj->hkwl", _DCT, blocks, _DCT)
    coef = np.rint(coef / table[None, :, None, :]) * table[None, :, None, :]
    out = np.einsum("ki,hkwl,lj->hiwj", _DCT, coef, _DCT)
    return out.reshape(H, W)


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode/decode through the baseline JPEG model and return the lossy
    image; quality follows the usual 1-100 convention."""
    qy = scaled_quant_table(_LUMA_Q, quality)
    qc = scaled_quant_table(_CHROMA_Q, quality)
    C, H, W = img.shape
    if C != 3:
        raise ValueError(f"jpeg_roundtrip expects 3 channels, got {C}")
    rgb = img * 255.0
    ycc = np.tensordot(_RGB_TO_YCC, rgb, axes=([1], [0])) + _YCC_OFFSET[:, None, None]
    ph = (-H) % 8
    pw = (-W) % 8
    ycc = np.pad(ycc, ((0, 0), (0, ph), (0, pw)), mode="edge") - 128.0
    planes = [
        _blockwise_quantize(ycc[0], qy),
        _blockwise_quantize(ycc[1], qc),
        _blockwise_quantize(ycc[2], qc),
    ]
    ycc = np.stack(planes)[:, :H, :W] + 128.0
    rgb = np.tensordot(_YCC_TO_RGB, ycc - _YCC_OFFSET[:, None, None], axes=([1], [0]))
    return np.clip(rgb / 255.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegradationOp:
    """One stage: kind in {blur, resize, noise, jpeg} plus its parameters.

    A resize op with target=True ignores its nominal scale and resamples to
    the pipeline's exact (H/s, W/s) output size.
    """

    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DegradationPipeline:
    stages: tuple
    sr_scale: int
    seed: int


def _blur_op(size, sx, sy, theta) -> DegradationOp:
    return DegradationOp("blur", {"size": int(size), "sx": float(sx), "sy": float(sy), "theta": float(theta)})


def test_degradation(kind: str, s: int) -> DegradationPipeline:
    """Fixed-parameter evaluation pipeline for one of the eight kinds:
    optional blur(21, sigma 2) -> bicubic 1/s -> optional noise(20) ->
    optional jpeg(50), composed in that order."""
    kind = normalize_kind(kind)
    parts = set() if kind == "clean" else set(kind.split("+"))
    stages = []
    if "b" in parts:
        stages.append(_blur_op(21, 2.0, 2.0, 0.0))
    stages.append(DegradationOp("resize", {"scale": 1.0 / s, "mode": "bicubic", "target": True}))
    if "n" in parts:
        stages.append(DegradationOp("noise", {"sigma": 20.0}))
    if "j" in parts:
        stages.append(DegradationOp("jpeg", {"q": 50}))
    return DegradationPipeline(stages=tuple(stages), sr_scale=s, seed=0)


# Sampling ranges for the two-stage train pipeline.  Stage 1 always blurs;
# stage 2 blurs with probability 0.8 and ends in the exact-size bicubic
# resize plus a second compression.
STAGE1_KERNEL_SIZES = tuple(range(7, 22, 2))
STAGE1_SIGMA = (0.2, 3.0)
STAGE1_RESIZE_SCALE = (0.15, 1.5)
STAGE1_NOISE_SIGMA = (1.0, 30.0)
JPEG_QUALITY = (30, 95)
STAGE2_BLUR_PROB = 0.8
STAGE2_SIGMA = (0.2, 1.5)
STAGE2_NOISE_SIGMA = (1.0, 25.0)
ANISO_PROB = 0.5


def _sample_blur(rng: RngState, sigma_range) -> DegradationOp:
    # fixed draw count regardless of the isotropic branch
    size = STAGE1_KERNEL_SIZES[int(next_f64(rng) * len(STAGE1_KERNEL_SIZES))]
    aniso = next_f64(rng) < ANISO_PROB
    lo, hi = sigma_range
    sx = lo + next_f64(rng) * (hi - lo)
    sy = lo + next_f64(rng) * (hi - lo)
    theta = next_f64(rng) * math.pi
    if not aniso:
        sy = sx
        theta = 0.0
    return _blur_op(size, sx, sy, theta)


def sample_train_pipeline(s: int, rng: RngState) -> DegradationPipeline:
    """Two-stage degradation with parameters drawn from the documented
    ranges; the same rng state always yields the same pipeline."""
    if s not in (2, 4):
        raise ValueError(f"sr scale must be 2 or 4, got {s}")
    stages = []
    # stage 1
    stages.append(_sample_blur(rng, STAGE1_SIGMA))
    lo, hi = STAGE1_RESIZE_SCALE
    rscale = lo + next_f64(rng) * (hi - lo)
    rmode = RESIZE_MODES[int(next_f64(rng) * len(RESIZE_MODES))]
    stages.append(DegradationOp("resize", {"scale": rscale, "mode": rmode}))
    lo, hi = STAGE1_NOISE_SIGMA
    stages.append(DegradationOp("noise", {"sigma": lo + next_f64(rng) * (hi - lo)}))
    qlo, qhi = JPEG_QUALITY
    stages.append(DegradationOp("jpeg", {"q": qlo + int(next_f64(rng) * (qhi - qlo + 1))}))
    # stage 2
    do_blur = next_f64(rng) < STAGE2_BLUR_PROB
    blur2 = _sample_blur(rng, STAGE2_SIGMA)
    if do_blur:
        stages.append(blur2)
    stages.append(DegradationOp("resize", {"scale": 1.0 / s, "mode": "bicubic", "target": True}))
    lo, hi = STAGE2_NOISE_SIGMA
    stages.append(DegradationOp("noise", {"sigma": lo + next_f64(rng) * (hi - lo)}))
    stages.append(DegradationOp("jpeg", {"q": qlo + int(next_f64(rng) * (qhi - qlo + 1))}))
    return DegradationPipeline(stages=tuple(stages), sr_scale=s, seed=rng.origin_seed)


def _shrunk_kernel(op: DegradationOp, h: int, w: int) -> BlurKernel | None:
    """Blur kernels must fit the current image; random stage-1 resizes can
    leave intermediates smaller than the sampled kernel, so the size is
    clamped to the largest odd value that fits (None = skip the blur)."""
    size = op.params["size"]
    limit = min(h, w)
    if size > limit:
        size = limit if limit % 2 == 1 else limit - 1
    if size < 3:
        return None
    return gaussian_kernel(size, op.params["sx"], op.params["sy"], op.params["theta"])


def apply_pipeline(img: np.ndarray, pipe: DegradationPipeline, rng: RngState | None = None) -> np.ndarray:
    """Run every stage in order; noise stages consume from rng.  The image
    dims must be divisible by the pipeline's SR scale so the target-resize
    stage can hit (H/s, W/s) exactly.  Output is clamped to [0, 1] after
    each stage."""
    C, H, W = img.shape
    s = pipe.sr_scale
    if H % s or W % s:
        raise ValueError(f"image {H}x{W} not divisible by sr scale {s}")
    out = img
    for op in pipe.stages:
        if op.kind == "blur":
            k = _shrunk_kernel(op, out.shape[1], out.shape[2])
            if k is not None:
                out = apply_blur(out, k)
        elif op.kind == "resize":
            if op.params.get("target"):
                out = resize_to(out, H // s, W // s, op.params["mode"])
            else:
                out = resize(out, op.params["scale"], op.params["mode"])
        elif op.kind == "noise":
            if rng is None:
                raise ValueError("pipeline contains a noise stage but no rng was given")
            out = add_gaussian_noise(out, op.params["sigma"], rng)
        elif op.kind == "jpeg":
            out = jpeg_roundtrip(out, op.params["q"])
        else:
            raise ValueError(f"unknown op kind {op.kind!r}")
        out = np.clip(out, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# Manifest serialization (one op per line, `kind key=value ...`)
# ---------------------------------------------------------------------------


def serialize_pipeline(pipe: DegradationPipeline) -> str:
    lines = [f"# sr_scale={pipe.sr_scale}", f"# seed={pipe.seed}"]
    for op in pipe.stages:
        if op.kind == "blur":
            p = op.params
            lines.append(f"blur size={p['size']} sx={p['sx']!r} sy={p['sy']!r} theta={p['theta']!r}")
        elif op.kind == "resize":
            p = op.params
            tail = " target=1" if p.get("target") else ""
            lines.append(f"resize scale={p['scale']!r} mode={p['mode']}{tail}")
        elif op.kind == "noise":
            lines.append(f"noise sigma={op.params['sigma']!r}")
        elif op.kind == "jpeg":
            lines.append(f"jpeg q={op.params['q']}")
    return "\n".join(lines) + "\n"


def parse_pipeline(text: str) -> DegradationPipeline:
    sr_scale = None
    seed = 0
    stages = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sr_scale="):
                sr_scale = int(body.split("=", 1)[1])
            elif body.startswith("seed="):
                seed = int(body.split("=", 1)[1])
            continue
        tokens = line.split()
        kind = tokens[0]
        kv = {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ValueError(f"manifest line {lineno}: malformed token {tok!r}")
            key, val = tok.split("=", 1)
            kv[key] = val
        try:
            if kind == "blur":
                stages.append(
                    _blur_op(int(kv["size"]), float(kv["sx"]), float(kv["sy"]), float(kv["theta"]))
                )
            elif kind == "resize":
                params = {"scale": float(kv["scale"]), "mode": kv["mode"]}
                if kv.get("target") == "1":
                    params["target"] = True
                if params["mode"] not in RESIZE_MODES:
                    raise KeyError(f"mode {params['mode']!r}")
                stages.append(DegradationOp("resize", params))
            elif kind == "noise":
                stages.append(DegradationOp("noise", {"sigma": float(kv["sigma"])}))
            elif kind == "jpeg":
                stages.append(DegradationOp("jpeg", {"q": int(kv["q"])}))
            else:
                raise ValueError(f"manifest line {lineno}: unknown op {kind!r}")
        except KeyError as e:
            raise ValueError(f"manifest line {lineno}: missing or bad field {e}") from None
    if sr_scale is None:
        raise ValueError("manifest missing '# sr_scale=' header")
    return DegradationPipeline(stages=tuple(stages), sr_scale=sr_scale, seed=seed)
