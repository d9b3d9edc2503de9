"""PSNR evaluation grid: one model x several degradation kinds.

Trains a small upscaler briefly, then scores it on a held-out synthetic
set under four named degradations. Heavier degradations should score
lower; rerunning prints the exact same numbers.
"""

import sys

sys.path.insert(0, "src")

from dropsr.evaluate import evaluate_grid, format_db
from dropsr.model import ModelConfig, build_model
from dropsr.synthetic import make_corpus
from dropsr.train import TrainConfig, init_rng_for, train_loop

tc = TrainConfig(iters=400, batch=4, lr_patch=16, seed=21)
net = build_model(ModelConfig(n_blocks=2, n_feats=8, scale=2), init_rng_for(tc))
net, _, _ = train_loop(net, make_corpus(6, base_seed=600, size=64), tc)

heldout = {"synth8": make_corpus(8, base_seed=601, size=64)}
report = evaluate_grid(net, heldout, ["clean", "b", "n", "b+n+j"], s=2, eval_seed=0, model_tag="toy")

print("dataset  kind     mean PSNR   images")
for row in report.rows:
    print(f"{row.dataset:<8} {row.kind:<8} {format_db(row.mean_psnr):>9} dB  {len(row.per_image):>3}")
