"""Analysis tools for trained SR networks.

Three instruments over the feature tap (the input of the final
convolution, the same layer channel dropout regularizes):

* channel saliency maps: backpropagate the summed spatial gradient of
  the SR output to the tap, take absolute values, min-max normalize all
  entries jointly, and score each channel by its mean;
* energy-normalized channel ablation: zero one channel (or a cumulative
  prefix of channels) and rescale the rest so the tap's total sum is
  preserved, then measure PSNR against the ground truth;
* degradation feature clustering: spatially averaged tap vectors for an
  image set under several degradation kinds, scored by the
  Calinski-Harabasz index, plus a 2-D PCA projection for plotting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Node
from .evaluate import center_crop_multiple, degrade_for_eval, psnr
from .model import SrNetwork, tail_from_tap
from .rng import derive_stream, uniform_array

# Entries spanning less than this range are treated as an all-zero
# gradient by the saliency normalizer.
_RANGE_EPS = 1e-12

# Seed tag ("proj") for the deterministic power-iteration start vector.
_PROJ_TAG = 0x70726F6A

ABLATION_ORDERS = ("by_index", "by_saliency_desc")


@dataclass(frozen=True)
class SaliencyResult:
    """Attribution of the output's spatial gradient to tap channels."""

    d_value: float
    maps: np.ndarray
    channel_scores: np.ndarray


class AblationRow(NamedTuple):
    psnr_after: float
    rescale: float
    guarded: bool


@dataclass(frozen=True)
class DdrResult:
    """Degradation-clustering summary over (image, kind) tap features."""

    features: np.ndarray
    labels: list
    chi: float
    projection: np.ndarray


def _single_lr(lr: np.ndarray) -> np.ndarray:
    a = np.asarray(lr)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError(f"expected a single (3, H, W) image, got {a.shape}")
    return a[None].astype(np.float32)


def channel_saliency(net: SrNetwork, lr: np.ndarray) -> SaliencyResult:
    """Per-channel attribution maps for one low-resolution image.

    The attribution target is D = sum of |forward x-diff| + |forward
    y-diff| over the SR output.  Its gradient at the feature tap is
    rectified and min-max normalized jointly across all channels, so the
    global max is 1 unless the whole gradient is (near) zero, in which
    case every map is zero.
    """
    out, tap = net.forward(_single_lr(lr), mode="eval")
    d = ag.spatial_gradient_sum(out)
    ag.backward(d)
    g = np.abs(tap.grad[0]).astype(np.float64)
    lo = g.min()
    hi = g.max()
    if hi - lo <= _RANGE_EPS:
        maps = np.zeros_like(g)
    else:
        maps = (g - lo) / (hi - lo)
    return SaliencyResult(
        d_value=float(d.value),
        maps=maps,
        channel_scores=maps.mean(axis=(1, 2)),
    )


def _eval_tap(net: SrNetwork, lr: np.ndarray) -> np.ndarray:
    _, tap = net.forward(_single_lr(lr), mode="eval")
    return tap.value


def _rescaled_ablation(tap: np.ndarray, zero_channels) -> tuple[np.ndarray, float, bool]:
    """Zero the given channels and rescale the rest so the total sum is
    preserved; the guard skips rescaling when the remaining sum is too
    close to zero for the ratio to be meaningful."""
    total = float(tap.sum(dtype=np.float64))
    ablated = tap.copy()
    ablated[:, zero_channels] = 0.0
    remaining = float(ablated.sum(dtype=np.float64))
    eps = 1e-6 * tap.size
    if abs(remaining) > eps:
        rescale = total / remaining
        ablated *= rescale
        return ablated, rescale, False
    return ablated, 1.0, True


def ablate_channel(net: SrNetwork, lr: np.ndarray, hr: np.ndarray, c: int) -> AblationRow:
    """PSNR after zeroing tap channel c with energy-preserving rescale.

    Returns (psnr_after, rescale, guarded); guarded means the remaining
    sum was too small to rescale, so the tap was left unscaled.
    """
    tap = _eval_tap(net, lr)
    n_channels = tap.shape[1]
    if not 0 <= c < n_channels:
        raise IndexError(f"channel {c} out of range for {n_channels} channels")
    ablated, rescale, guarded = _rescaled_ablation(tap, [c])
    sr = tail_from_tap(net, ablated)[0]
    return AblationRow(psnr(sr, hr), rescale, guarded)


def sequential_ablation(
    net: SrNetwork, lr: np.ndarray, hr: np.ndarray, order: str = "by_index"
) -> list[tuple[int, float]]:
    """Cumulative ablation curve: PSNR after zeroing the first k channels
    of the chosen order, for k = 1..C."""
    if order not in ABLATION_ORDERS:
        raise ValueError(f"order must be one of {ABLATION_ORDERS}, got {order!r}")
    tap = _eval_tap(net, lr)
    n_channels = tap.shape[1]
    if order == "by_saliency_desc":
        scores = channel_saliency(net, lr).channel_scores
        ranked = np.argsort(-scores, kind="stable")
    else:
        ranked = np.arange(n_channels)
    curve = []
    for k in range(1, n_channels + 1):
        ablated, _, _ = _rescaled_ablation(tap, ranked[:k])
        sr = tail_from_tap(net, ablated)[0]
        curve.append((k, psnr(sr, hr)))
    return curve


def ddr_features(
    net: SrNetwork, images, kinds, s: int, eval_seed: int = 0
) -> tuple[np.ndarray, list]:
    """Spatially averaged tap vectors for every (image, kind) pair.

    images are HR arrays; each is center-cropped to a multiple of s and
    degraded with the named test kind before the eval-mode forward.
    Returns (features, labels) with one row and one kind label per pair.
    """
    images = list(images)
    kinds = list(kinds)
    if len(kinds) < 2:
        raise ValueError("need at least 2 degradation kinds")
    if len(images) < 2:
        raise ValueError("need at least 2 images")
    features = []
    labels = []
    for kind in kinds:
        for i, img in enumerate(images):
            hr = center_crop_multiple(np.asarray(img, dtype=np.float64), s)
            lr = degrade_for_eval(hr, kind, s, eval_seed, i)
            tap = _eval_tap(net, lr)
            features.append(tap.mean(axis=(0, 2, 3), dtype=np.float64))
            labels.append(kind)
    return np.stack(features), labels


def chi(features, labels) -> float:
    """Calinski-Harabasz index: between-class dispersion over
    within-class dispersion, each scaled by its degrees of freedom.

    Zero between-class scatter gives 0.0; zero within-class scatter with
    separated classes gives +inf.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = list(labels)
    n = x.shape[0]
    if len(labels) != n:
        raise ValueError(f"{n} feature rows but {len(labels)} labels")
    classes = sorted(set(labels))
    k = len(classes)
    if k < 2:
        raise ValueError("need at least 2 classes")
    if n <= k:
        raise ValueError(f"need more points ({n}) than classes ({k})")
    mu = x.mean(axis=0)
    ssb = 0.0
    ssw = 0.0
    lab = np.asarray(labels)
    for cls in classes:
        grp = x[lab == cls]
        mu_c = grp.mean(axis=0)
        ssb += grp.shape[0] * float(((mu_c - mu) ** 2).sum())
        ssw += float(((grp - mu_c) ** 2).sum())
    if ssb == 0.0:
        return 0.0
    if ssw == 0.0:
        return math.inf
    return (ssb / (k - 1)) / (ssw / (n - k))


def _top_eigvec(scatter: np.ndarray, ref_norm: float):
    """Dominant unit eigenvector by power iteration, or None when the
    matrix is negligible relative to ref_norm (residual variance from an
    earlier deflation, or no variance at all)."""
    if np.linalg.norm(scatter) <= 1e-12 * max(ref_norm, 1e-300):
        return None
    d = scatter.shape[0]
    rng = derive_stream(_PROJ_TAG, d)
    v = 2.0 * uniform_array(rng, d) - 1.0
    v[int(np.argmax(np.diag(scatter)))] += 1.0
    v /= np.linalg.norm(v)
    for _ in range(1000):
        w = scatter @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-12 * max(ref_norm, 1e-300):
            return None
        w /= norm
        if np.linalg.norm(w - v) < 1e-9:
            return w
        v = w
    return v


def project_2d(features) -> np.ndarray:
    """Project feature rows onto their top-2 principal directions.

    Power iteration with deflation finds the directions; each direction's
    first nonzero loading is made positive, and directions whose variance
    is negligible (relative to the leading one) yield zero coordinates.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (n, d) features, got shape {x.shape}")
    if x.shape[0] < 3:
        raise ValueError(f"need at least 3 points, got {x.shape[0]}")
    centered = x - x.mean(axis=0)
    scatter = centered.T @ centered
    ref_norm = float(np.linalg.norm(scatter))
    out = np.zeros((x.shape[0], 2))
    for j in range(2):
        v = _top_eigvec(scatter, ref_norm)
        if v is None:
            break
        nonzero = np.nonzero(np.abs(v) > 1e-12)[0]
        if nonzero.size and v[nonzero[0]] < 0:
            v = -v
        out[:, j] = centered @ v
        lam = float(v @ scatter @ v)
        scatter = scatter - lam * np.outer(v, v)
    return out


def ddr_report(net: SrNetwork, images, kinds, s: int, eval_seed: int = 0) -> DdrResult:
    """Features, labels, CHI, and the 2-D projection in one pass."""
    features, labels = ddr_features(net, images, kinds, s, eval_seed)
    return DdrResult(
        features=features,
        labels=labels,
        chi=chi(features, labels),
        projection=project_2d(features),
    )


# ---------------------------------------------------------------------------
# File outputs
# ---------------------------------------------------------------------------


def write_pgm(path, img01: np.ndarray) -> None:
    """8-bit binary PGM from a [0,1] grayscale map."""
    a = np.asarray(img01)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {a.shape}")
    h, w = a.shape
    data = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_saliency(result: SaliencyResult, out_dir) -> None:
    """saliency.csv (channel,score) plus one PGM per channel map."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "saliency.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "score"])
        for c, score in enumerate(result.channel_scores):
            writer.writerow([c, f"{score:.8e}"])
    for c in range(result.maps.shape[0]):
        write_pgm(out_dir / f"map_{c:02d}.pgm", result.maps[c])


def write_ablation_csv(path, rows: list[AblationRow], baseline_psnr: float) -> None:
    """Per-channel ablation table: channel,rescale,psnr_after,delta."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "rescale", "psnr_after", "delta"])
        for c, row in enumerate(rows):
            writer.writerow(
                [
                    c,
                    f"{row.rescale:.8e}",
                    f"{row.psnr_after:.6f}",
                    f"{row.psnr_after - baseline_psnr:.6f}",
                ]
            )


def write_sequential_csv(path, curve: list[tuple[int, float]], baseline_psnr: float) -> None:
    """Cumulative ablation curve (k,psnr), with the unablated k=0 row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "psnr"])
        writer.writerow([0, f"{baseline_psnr:.6f}"])
        for k, value in curve:
            writer.writerow([k, f"{value:.6f}"])


def write_ddr_csv(result: DdrResult, summary_path, points_path, image_names=None) -> None:
    """Summary rows (image,kind,chi_overall) and projection points
    (x,y,kind); the point file notes that CHI is computed on the full
    feature vectors, not the projection."""
    n_kinds = len(set(result.labels))
    per_kind = len(result.labels) // n_kinds
    if image_names is None:
        image_names = [f"image_{i}" for i in range(per_kind)]
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "kind", "chi_overall"])
        for i, kind in enumerate(result.labels):
            writer.writerow([image_names[i % per_kind], kind, f"{result.chi:.6f}"])
    with open(points_path, "w", newline="") as fh:
        fh.write("# chi is computed on the full feature vectors, not this projection\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "kind"])
        for point, kind in zip(result.projection, result.labels):
            writer.writerow([f"{point[0]:.8e}", f"{point[1]:.8e}", kind])
