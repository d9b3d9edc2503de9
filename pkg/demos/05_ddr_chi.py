"""Degradation clustering in feature space, scored by the
Calinski-Harabasz index.

Pools the features feeding the final convolution for the same images
under three degradation kinds, measures how strongly they cluster by
kind (high CHI = strongly degradation-aware features), and prints a 2D
projection you can eyeball as a scatter plot.

At this toy scale image content dominates the pooled features, so the
absolute CHI is small; what carries signal is comparing CHI across
training settings, which the acceptance suite probes on longer runs
(and where it documents why the dropout-lowers-CHI ordering needs more
width than these toy models have).
"""

import sys

sys.path.insert(0, "src")

from dropsr.interpret import ddr_report
from dropsr.model import ModelConfig, build_model
from dropsr.synthetic import make_corpus
from dropsr.train import TrainConfig, init_rng_for, train_loop

tc = TrainConfig(iters=2000, batch=4, lr_patch=16, seed=41, mode="multi_degradation")
net = build_model(ModelConfig(n_blocks=2, n_feats=8, scale=2), init_rng_for(tc))
net, _, _ = train_loop(net, make_corpus(6, base_seed=800, size=64), tc)

images = make_corpus(10, base_seed=801, size=64)
kinds = ["clean", "n", "b+n+j"]
report = ddr_report(net, images, kinds, s=2, eval_seed=0)

print(f"{len(images)} images x {kinds} -> {report.features.shape[0]} feature vectors")
print(f"CHI by degradation kind: {report.chi:.6g}\n")

print("2D projection (first two principal directions):")
print("     x        y      kind")
for (x, y), label in zip(report.projection, report.labels):
    print(f"{x:+8.4f} {y:+8.4f}   {label}")
