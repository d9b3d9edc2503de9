"""PSNR and the degradation-by-dataset evaluation grid.

PSNR is computed on RGB over the full image with both operands clamped to
[0, 1]; identical images give the +inf sentinel, serialized as "inf" in
CSV output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .degrade import KINDS, apply_pipeline, normalize_kind, test_degradation
from .model import infer
from .parallel import thread_map
from .rng import derive_stream, mix_seed


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) in dB on the [0,1] scale; +inf for equal inputs."""
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    ac = np.clip(a.astype(np.float64), 0.0, 1.0)
    bc = np.clip(b.astype(np.float64), 0.0, 1.0)
    mse = float(np.mean((ac - bc) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def format_db(value: float) -> str:
    """Serialize a dB value; infinity becomes the literal string 'inf'."""
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def center_crop_multiple(img: np.ndarray, s: int) -> np.ndarray:
    """Largest centered crop whose dims are divisible by s."""
    C, H, W = img.shape
    h = (H // s) * s
    w = (W // s) * s
    if h == 0 or w == 0:
        raise ValueError(f"image {H}x{W} smaller than sr scale {s}")
    top = (H - h) // 2
    left = (W - w) // 2
    return img[:, top : top + h, left : left + w]


@dataclass(frozen=True)
class EvalRow:
    model_tag: str
    kind: str
    dataset: str
    mean_psnr: float
    per_image: tuple


@dataclass(frozen=True)
class EvalReport:
    rows: tuple


def degrade_for_eval(hr: np.ndarray, kind: str, s: int, eval_seed: int, image_index: int) -> np.ndarray:
    """Fixed-parameter test degradation of one HR image.  The noise stream
    is keyed by (eval seed, kind, image index), so a kind produces the same
    LR bytes regardless of which other kinds run alongside it."""
    kind = normalize_kind(kind)
    pipe = test_degradation(kind, s)
    stream = derive_stream(mix_seed(eval_seed, KINDS.index(kind)), image_index)
    return apply_pipeline(hr, pipe, stream)


def evaluate_grid(net, datasets: dict, kinds, s: int, eval_seed: int = 0, model_tag: str = "model") -> EvalReport:
    """PSNR of net over every (dataset, degradation kind) cell; HR images
    are center-cropped to multiples of s first."""
    rows = []
    for ds_name, images in datasets.items():
        if not images:
            raise ValueError(f"dataset {ds_name!r} is empty")
        for kind in kinds:

            def cell(pair):
                i, img = pair
                hr = center_crop_multiple(img, s)
                lr = degrade_for_eval(hr, kind, s, eval_seed, i)
                sr = infer(net, lr.astype(np.float32))
                return psnr(sr, hr)

            per_image = thread_map(cell, enumerate(images))
            mean = sum(per_image) / len(per_image)
            rows.append(
                EvalRow(
                    model_tag=model_tag,
                    kind=normalize_kind(kind),
                    dataset=ds_name,
                    mean_psnr=mean,
                    per_image=tuple(per_image),
                )
            )
    return EvalReport(rows=tuple(rows))


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "degradation", "dataset", "image", "psnr_db"])
        for row in report.rows:
            for i, v in enumerate(row.per_image):
                w.writerow([row.model_tag, row.kind, row.dataset, i, format_db(v)])


def write_summary_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "degradation", "dataset", "mean_psnr_db", "images"])
        for row in report.rows:
            w.writerow([row.model_tag, row.kind, row.dataset, format_db(row.mean_psnr), len(row.per_image)])
