"""Degradation walkthrough: the blur -> resize -> noise -> jpeg chain.

Builds one synthetic HR image, runs every named test degradation on it,
and prints how far each LR output sits from a plain bicubic downscale.
Also samples a random two-stage training pipeline and prints its manifest.
"""

import sys

sys.path.insert(0, "src")

from dropsr.degrade import (
    KINDS,
    apply_pipeline,
    resize,
    sample_train_pipeline,
    serialize_pipeline,
    test_degradation,
)
from dropsr.evaluate import format_db, psnr
from dropsr.rng import derive_stream
from dropsr.synthetic import make_image

S = 2
hr = make_image(derive_stream(123, 0), size=96)
reference = resize(hr, 1.0 / S, "bicubic")

print(f"HR {hr.shape} -> LR {reference.shape} at scale {S}\n")
print("kind     ops  PSNR vs clean bicubic")
for kind in KINDS:
    pipe = test_degradation(kind, S)
    lr = apply_pipeline(hr, pipe, derive_stream(9, 0))
    gap = psnr(lr, reference)
    print(f"{kind:<8} {len(pipe.stages):>3}  {format_db(gap):>10} dB")

print("\nA randomly sampled training pipeline (two stages, seeded):")
pipe = sample_train_pipeline(S, derive_stream(7, 0))
print(serialize_pipeline(pipe))
