"""Adam optimiser and the triangular cyclical learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: OptimizerState, lr: float
) -> OptimizerState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Parameters whose gradient is None are treated as having zero gradient.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = 0.0
        elif g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return state


class Adam:
    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(beta1, beta2, eps)

    def step(self, lr: float) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def cyclical_lr(iteration: int, base_lr: float, max_lr: float, cycle: int = 20000) -> float:
    """Triangular schedule: base -> max over the first half cycle, back to base over the second."""
    if base_lr > max_lr:
        raise ValueError(f"base_lr {base_lr} exceeds max_lr {max_lr}")
    if cycle < 2:
        raise ValueError(f"cycle must be >= 2, got {cycle}")
    half = cycle / 2.0
    pos = (iteration % cycle) / half
    x = abs(pos - 1.0)
    return base_lr + (max_lr - base_lr) * (1.0 - x)
