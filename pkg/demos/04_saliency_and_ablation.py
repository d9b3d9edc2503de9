"""Channel saliency and energy-preserving channel ablation.

For a briefly trained upscaler: rank the channels feeding the final
convolution by how much the output's spatial gradient responds to them,
then zero channels one at a time (rescaling the survivors so the layer's
total activation is preserved) and watch the PSNR curve.
"""

import sys

import numpy as np

sys.path.insert(0, "src")

from dropsr.evaluate import center_crop_multiple, degrade_for_eval, format_db, psnr
from dropsr.interpret import channel_saliency, sequential_ablation
from dropsr.model import ModelConfig, build_model, infer
from dropsr.synthetic import make_corpus, make_image
from dropsr.rng import derive_stream
from dropsr.train import TrainConfig, init_rng_for, train_loop

tc = TrainConfig(iters=500, batch=4, lr_patch=16, seed=31)
net = build_model(ModelConfig(n_blocks=2, n_feats=8, scale=2), init_rng_for(tc))
net, _, _ = train_loop(net, make_corpus(6, base_seed=700, size=64), tc)

hr = center_crop_multiple(make_image(derive_stream(701, 0), size=64), 2)
lr = degrade_for_eval(hr, "clean", 2, 0, 0)

sal = channel_saliency(net, lr)
order = np.argsort(-sal.channel_scores)
print("channels by saliency score (max normalized to ~1):")
for c in order:
    bar = "#" * int(40 * sal.channel_scores[c])
    print(f"  ch {c}: {sal.channel_scores[c]:.3f} {bar}")

base = psnr(infer(net, lr.astype(np.float32)), hr)
print(f"\nbaseline PSNR: {format_db(base)} dB")
print("k  PSNR after zeroing k channels (by index, energy rescaled)")
for k, val in sequential_ablation(net, lr, hr, order="by_index"):
    print(f"{k}  {format_db(val)} dB ({val - base:+.3f})")
