"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError
from .tensor import Tensor


def _reduce(out: Tensor | np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    data = out.data if isinstance(out, Tensor) else np.asarray(out)
    if not np.all(np.isfinite(data)):
        raise NumericError("non-finite value in checked operation output")
    return data if weights is None else data * weights


def grad_check(
    op: Callable[..., Tensor],
    inputs: Tensor | Sequence[Tensor],
    eps: float = 1e-5,
    params: Sequence[Tensor] = (),
    weighted: bool = True,
    max_checks: int | None = None,
    seed: int = 0,
    extended: bool = True,
) -> float:
    """Max relative error between autograd and central differences.

    ``op(*inputs)`` must be pure.  Its output is reduced to a scalar by a
    sum, optionally weighted by a fixed random tensor (``weighted``) so that
    reductions with identically-zero gradient (batch-norm output sums, for
    instance) are still informative.  Gradients are checked for every
    element of ``inputs`` and of any extra ``params`` the op closes over;
    ``max_checks`` samples that many elements per tensor instead.

    With ``extended`` the finite-difference evaluations run in
    ``np.longdouble`` so their roundoff stays far below the 1e-8 floor of
    the relative error even where the true gradient is tiny.

    The error per element is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)``.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    targets = inputs + list(params)
    saved = [t.requires_grad for t in targets]
    for t in targets:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    rng = np.random.default_rng(seed)

    out = op(*inputs)
    weights = rng.standard_normal(out.shape) if weighted else None
    if not np.all(np.isfinite(out.data)):
        raise NumericError("non-finite value in checked operation output")
    loss = (out * weights).sum() if weighted else out.sum()
    loss.backward()
    analytic = [np.zeros(t.shape) if t.grad is None else np.array(t.grad, dtype=np.float64) for t in targets]

    originals = [t.data for t in targets]
    if extended:
        for t in targets:
            t.data = t.data.astype(np.longdouble)
        if weights is not None:
            weights = weights.astype(np.longdouble)

    worst = 0.0
    for t, g_ad in zip(targets, analytic):
        flat = t.data.reshape(-1)
        idxs = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            idxs = rng.choice(flat.size, size=max_checks, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            plus = _reduce(op(*inputs), weights)
            flat[i] = orig - eps
            minus = _reduce(op(*inputs), weights)
            flat[i] = orig
            g_fd = float(np.sum(plus - minus) / (2.0 * eps))
            a = float(g_ad.reshape(-1)[i])
            err = abs(a - g_fd) / max(abs(a), abs(g_fd), 1e-8)
            worst = max(worst, err)

    for t, s, orig in zip(targets, saved, originals):
        t.data = orig
        t.requires_grad = s
        t.grad = None
    return worst
