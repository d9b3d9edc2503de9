"""SRResNet-lite: head conv, residual trunk with long skip, pixel-shuffle
upsampler, and a final RGB conv, with dropout wired at any of the studied
positions:

* ``last_conv``: a single dropout immediately before the final conv;
* ``after_block``: a single dropout after trunk block ceil(n_blocks * f);
* ``dropped_blocks``: the last ceil(n_blocks * fraction) blocks apply
  dropout after their skip addition;
* ``none``: no dropout layer at all.

Every forward also exposes the feature tap: the tensor entering the final
conv, which is exactly what a last-conv dropout consumes and the layer all
analysis tools (saliency, ablation, degradation clustering) operate on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import DropoutSpec, Node
from .rng import RngState, uniform_array

POSITIONS = ("none", "last_conv", "after_block", "dropped_blocks")
AFTER_BLOCK_FRACTIONS = (0.25, 0.5, 0.75, 1.0)
DROPPED_FRACTIONS = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class ModelConfig:
    n_blocks: int = 4
    n_feats: int = 16
    scale: int = 2
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    position: str = "none"
    fraction: float | None = None

    def __post_init__(self):
        if self.n_blocks < 1 or self.n_feats < 1:
            raise ValueError(f"n_blocks/n_feats must be >= 1, got {self.n_blocks}/{self.n_feats}")
        if self.scale not in (2, 4):
            raise ValueError(f"sr scale must be 2 or 4, got {self.scale}")
        if self.position not in POSITIONS:
            raise ValueError(f"position must be one of {POSITIONS}, got {self.position!r}")
        if self.position == "after_block":
            if self.fraction not in AFTER_BLOCK_FRACTIONS:
                raise ValueError(f"after_block fraction must be in {AFTER_BLOCK_FRACTIONS}")
            if abs(self.n_blocks * self.fraction - round(self.n_blocks * self.fraction)) > 1e-9:
                raise ValueError(
                    f"after_block fraction {self.fraction} does not land on a block boundary "
                    f"for n_blocks={self.n_blocks}"
                )
        elif self.position == "dropped_blocks":
            if self.fraction not in DROPPED_FRACTIONS:
                raise ValueError(f"dropped_blocks fraction must be in {DROPPED_FRACTIONS}")
        elif self.fraction is not None:
            raise ValueError(f"position {self.position!r} takes no fraction")


def _conv_shapes(cfg: ModelConfig):
    """(name, c_in, c_out, k) for every conv, in initialization order."""
    F = cfg.n_feats
    shapes = [("head", 3, F, 3)]
    for i in range(cfg.n_blocks):
        shapes.append((f"block{i}.conv1", F, F, 3))
        shapes.append((f"block{i}.conv2", F, F, 3))
    shapes.append(("exit", F, F, 3))
    for j in range(int(math.log2(cfg.scale))):
        shapes.append((f"up{j}", F, 4 * F, 3))
    shapes.append(("final", F, 3, 3))
    return shapes


class SrNetwork:
    """Parameter nodes plus the wiring described by its config.

    dropout_sites lists where dropout layers act, as strings:
    "last_conv", "after_block:<k>" (1-based block), or "block:<i>"
    (0-based dropped residual block).
    """

    def __init__(self, cfg: ModelConfig, params: dict):
        self.cfg = cfg
        self.params = params
        self.dropout_sites = _sites(cfg)

    def param_values(self) -> dict:
        return {name: node.value for name, node in self.params.items()}

    def zero_grad(self):
        for node in self.params.values():
            node.grad = None

    def forward(self, x, mode: str = "eval", rng: RngState | None = None):
        """Run the network; returns (sr_output_node, feature_tap_node)."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be train|eval, got {mode!r}")
        node = x if isinstance(x, Node) else Node(x)
        if node.value.ndim != 4 or node.value.shape[1] != 3:
            raise ValueError(f"expected input (N, 3, H, W), got {node.value.shape}")
        cfg = self.cfg
        p = self.params
        spec = cfg.dropout
        active = mode == "train" and spec.p > 0.0 and cfg.position != "none"
        if active and rng is None:
            raise ValueError("train-mode forward with active dropout requires an rng stream")

        def conv(inp, name):
            return ag.conv2d(inp, p[name + ".w"], p[name + ".b"], stride=1, padding=1)

        dropped_from = cfg.n_blocks - _n_dropped(cfg)
        after_idx = _after_block_index(cfg)

        head = ag.leaky_relu(conv(node, "head"), 0.2)
        t = head
        for i in range(cfg.n_blocks):
            u = conv(ag.leaky_relu(conv(t, f"block{i}.conv1"), 0.2), f"block{i}.conv2")
            t = ag.add(t, u)
            if cfg.position == "dropped_blocks" and i >= dropped_from:
                t = ag.dropout(t, spec, mode, rng)
            elif cfg.position == "after_block" and i + 1 == after_idx:
                t = ag.dropout(t, spec, mode, rng)
        t = ag.add(conv(t, "exit"), head)
        for j in range(int(math.log2(cfg.scale))):
            t = ag.leaky_relu(ag.pixel_shuffle(conv(t, f"up{j}"), 2), 0.2)
        tap = t
        if cfg.position == "last_conv":
            t = ag.dropout(t, spec, mode, rng)
        out = conv(t, "final")
        return out, tap


def _n_dropped(cfg: ModelConfig) -> int:
    if cfg.position != "dropped_blocks":
        return 0
    return math.ceil(cfg.n_blocks * cfg.fraction)


def _after_block_index(cfg: ModelConfig) -> int:
    if cfg.position != "after_block":
        return 0
    return math.ceil(cfg.n_blocks * cfg.fraction)


def _sites(cfg: ModelConfig):
    if cfg.position == "last_conv":
        return ["last_conv"]
    if cfg.position == "after_block":
        return [f"after_block:{_after_block_index(cfg)}"]
    if cfg.position == "dropped_blocks":
        start = cfg.n_blocks - _n_dropped(cfg)
        return [f"block:{i}" for i in range(start, cfg.n_blocks)]
    return []


def build_model(cfg: ModelConfig, rng: RngState) -> SrNetwork:
    """Initialize parameters: weights uniform in +-sqrt(6/fan_in)*0.1 (the
    0.1 keeps small trunks stable), biases zero; float32 throughout."""
    params = {}
    for name, c_in, c_out, k in _conv_shapes(cfg):
        fan_in = c_in * k * k
        bound = math.sqrt(6.0 / fan_in) * 0.1
        u = uniform_array(rng, c_out * c_in * k * k).reshape(c_out, c_in, k, k)
        w = ((2.0 * u - 1.0) * bound).astype(np.float32)
        params[name + ".w"] = Node(w)
        params[name + ".b"] = Node(np.zeros(c_out, dtype=np.float32))
    return SrNetwork(cfg, params)


def tail_from_tap(net: SrNetwork, tap_value: np.ndarray) -> np.ndarray:
    """Finish the eval-mode forward from a (possibly modified) feature tap:
    just the final conv."""
    out = ag.conv2d(
        Node(tap_value), net.params["final.w"], net.params["final.b"], stride=1, padding=1
    )
    return out.value


def infer(net: SrNetwork, lr_img: np.ndarray) -> np.ndarray:
    """Eval-mode forward on a single (3, H, W) image; returns the raw
    (unclamped) SR image."""
    out, _ = net.forward(lr_img[None].astype(np.float32), mode="eval")
    return out.value[0]
