"""Minimal reverse-mode differentiation over dense N,C,H,W arrays.

Just enough machinery for a small super-resolution network and for
backpropagating an attribution target to an intermediate feature layer:
2-D convolution, leaky ReLU, pixel shuffle, dropout in both element and
channel flavours, elementwise add, L1 loss, and the summed spatial
gradient used as an attribution target.

A :class:`Node` wraps one value array plus its gradient and a backward
closure.  Graphs are built eagerly by the op functions and walked once,
in reverse topological order, by :func:`backward`.  Ops never mutate
value arrays, so nodes may share storage (e.g. eval-mode dropout returns
its input node unchanged).

All computation stays in the dtype of the inputs: float32 for training,
float64 for the finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngState, uniform_array


class Node:
    """One value in the computation graph.

    grad is lazily allocated on first accumulation; a node feeding several
    consumers receives the sum of their upstream gradients.
    """

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = value
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape


def _accum(node: Node, g) -> None:
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def zero_grad(nodes) -> None:
    for n in nodes:
        n.grad = None


def backward(root: Node) -> None:
    """Backpropagate from a root node, visiting each node exactly once."""
    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------


def conv2d(x: Node, w: Node, b: Node, stride: int = 1, padding: int = 0) -> Node:
    """2-D cross-correlation with zero padding.

    x: (N, C_in, H, W); w: (C_out, C_in, k, k); b: (C_out,).
    Output spatial size is floor((H + 2*padding - k) / stride) + 1.
    """
    xv, wv, bv = x.value, w.value, b.value
    N, Ci, H, W = xv.shape
    Co, Ciw, kh, kw = wv.shape
    if Ci != Ciw:
        raise ValueError(
            f"conv2d: input has {Ci} channels but weight expects {Ciw} (in-channel mismatch)"
        )
    if kh != kw:
        raise ValueError(f"conv2d: non-square kernel {kh}x{kw}")
    if bv.shape != (Co,):
        raise ValueError(
            f"conv2d: bias has shape {bv.shape}, expected ({Co},) to match out-channels"
        )
    k = kh
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ValueError(f"conv2d: kernel {k} too large for padded input {H}x{W}")

    if padding:
        xp = np.zeros((N, Ci, H + 2 * padding, W + 2 * padding), dtype=xv.dtype)
        xp[:, :, padding : padding + H, padding : padding + W] = xv
    else:
        xp = xv
    Hp, Wp = xp.shape[2], xp.shape[3]

    # One im2col buffer serves the forward GEMM, the weight-gradient GEMM,
    # and (transposed back) the input gradient.
    cols = np.empty((N, Ci, k, k, Ho, Wo), dtype=xv.dtype)
    for u in range(k):
        for v in range(k):
            cols[:, :, u, v] = xp[:, :, u : u + stride * Ho : stride, v : v + stride * Wo : stride]
    cols2 = cols.reshape(N, Ci * k * k, Ho * Wo)
    w2 = wv.reshape(Co, Ci * k * k)
    out = np.matmul(w2[None], cols2).reshape(N, Co, Ho, Wo)
    out += bv.reshape(Co, 1, 1)

    def bwd(g):
        _accum(b, g.sum(axis=(0, 2, 3)))
        g2 = g.reshape(N, Co, Ho * Wo)
        gw = np.matmul(g2, cols2.swapaxes(1, 2)).sum(axis=0).reshape(wv.shape)
        _accum(w, gw)
        dcols = np.matmul(w2.T[None], g2).reshape(N, Ci, k, k, Ho, Wo)
        gxp = np.zeros((N, Ci, Hp, Wp), dtype=g.dtype)
        for u in range(k):
            for v in range(k):
                gxp[:, :, u : u + stride * Ho : stride, v : v + stride * Wo : stride] += dcols[
                    :, :, u, v
                ]
        gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        _accum(x, gx)

    return Node(out, (x, w, b), bwd)


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    """max(x, slope*x); the subgradient at 0 is 1."""
    if slope < 0:
        raise ValueError(f"leaky_relu: slope must be >= 0, got {slope}")
    pos = x.value >= 0
    out = np.where(pos, x.value, x.value * np.asarray(slope, dtype=x.value.dtype))

    def bwd(g):
        _accum(x, np.where(pos, g, g * np.asarray(slope, dtype=g.dtype)))

    return Node(out, (x,), bwd)


def add(a: Node, b: Node) -> Node:
    """Elementwise sum of two equally shaped nodes (skip connections)."""
    if a.value.shape != b.value.shape:
        raise ValueError(f"add: shape mismatch {a.value.shape} vs {b.value.shape}")
    out = a.value + b.value

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return Node(out, (a, b), bwd)


def pixel_shuffle(x: Node, r: int) -> Node:
    """Rearrange (N, C*r^2, H, W) into (N, C, H*r, W*r).

    out[n, c, h*r+dy, w*r+dx] = in[n, c*r^2 + dy*r + dx, h, w].
    """
    N, C, H, W = x.value.shape
    if C % (r * r) != 0:
        raise ValueError(f"pixel_shuffle: {C} channels not divisible by r^2 = {r * r}")
    Co = C // (r * r)
    out = np.ascontiguousarray(
        x.value.reshape(N, Co, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(N, Co, H * r, W * r)
    )

    def bwd(g):
        gx = g.reshape(N, Co, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(N, C, H, W)
        _accum(x, np.ascontiguousarray(gx))

    return Node(out, (x,), bwd)


@dataclass(frozen=True)
class DropoutSpec:
    """Dropout dimension ('element' or 'channel') and drop probability."""

    dimension: str = "channel"
    p: float = 0.0

    def __post_init__(self):
        if self.dimension not in ("element", "channel"):
            raise ValueError(f"dropout dimension must be element|channel, got {self.dimension!r}")
        if not (0.0 <= self.p < 1.0):
            raise ValueError(f"dropout probability must be in [0, 1), got {self.p}")


def dropout(x: Node, spec: DropoutSpec, mode: str, rng: RngState | None = None) -> Node:
    """Inverted dropout: train mode masks and rescales by 1/(1-p); eval mode
    is strictly the identity (the input node is returned unchanged)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be train|eval, got {mode!r}")
    if mode == "eval" or spec.p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: train mode with p > 0 requires an rng stream")

    N, C, H, W = x.value.shape
    keep = 1.0 - spec.p
    if spec.dimension == "element":
        u = uniform_array(rng, N * C * H * W).reshape(N, C, H, W)
    else:
        u = uniform_array(rng, N * C).reshape(N, C, 1, 1)
    mask = (u >= spec.p).astype(x.value.dtype) / np.asarray(keep, dtype=x.value.dtype)
    out = x.value * mask

    def bwd(g):
        _accum(x, g * mask)

    return Node(out, (x,), bwd)


def l1_loss(pred: Node, target: np.ndarray) -> Node:
    """Mean absolute error against a constant target; sign(0) = 0 backward."""
    if pred.value.shape != target.shape:
        raise ValueError(f"l1_loss: shape mismatch {pred.value.shape} vs {target.shape}")
    diff = pred.value - target
    out = np.mean(np.abs(diff))

    def bwd(g):
        _accum(pred, g * np.sign(diff) / np.asarray(diff.size, dtype=diff.dtype))

    return Node(np.asarray(out), (pred,), bwd)


def spatial_gradient_sum(x: Node) -> Node:
    """Sum over |forward x-difference| + |forward y-difference| of all
    channels, the attribution target for the channel saliency maps."""
    dx = x.value[:, :, :, 1:] - x.value[:, :, :, :-1]
    dy = x.value[:, :, 1:, :] - x.value[:, :, :-1, :]
    out = np.sum(np.abs(dx)) + np.sum(np.abs(dy))

    def bwd(g):
        gx = np.zeros_like(x.value)
        sx = np.sign(dx)
        sy = np.sign(dy)
        gx[:, :, :, 1:] += sx
        gx[:, :, :, :-1] -= sx
        gx[:, :, 1:, :] += sy
        gx[:, :, :-1, :] -= sy
        _accum(x, g * gx)

    return Node(np.asarray(out), (x,), bwd)
