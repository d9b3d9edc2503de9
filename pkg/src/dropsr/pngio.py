"""8-bit RGB PNG image I/O.

Everything else in the package works on float images in [0,1] with shape
(3, H, W); quantization happens only at these file boundaries.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def read_png(path) -> np.ndarray:
    """Load a PNG as a (3, H, W) float64 array in [0,1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return rgb.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    """Write a [0,1] float image as 8-bit RGB; values are clipped then
    rounded half-to-even."""
    a = np.asarray(img)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got shape {a.shape}")
    q = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")
