"""Adam with bias correction and a cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, pi

import numpy as np


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name, plus the
    step counter t (number of completed updates)."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(beta1=beta1, beta2=beta2, eps=eps)
    for name, value in params.items():
        state.m[name] = np.zeros_like(value)
        state.v[name] = np.zeros_like(value)
    return state


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One in-place Adam update of every parameter array.

    params and grads map name -> ndarray; each parameter must have a
    gradient of the same shape.  Moment arrays stay in the parameter
    dtype so repeated runs are bit-identical.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)


def cosine_lr(iteration: int, period: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at iteration 0 to 0 at iteration >= period."""
    if period <= 0:
        raise ValueError(f"cosine_lr: period must be positive, got {period}")
    if iteration >= period:
        return 0.0
    return lr0 * (1.0 + cos(pi * iteration / period)) / 2.0
