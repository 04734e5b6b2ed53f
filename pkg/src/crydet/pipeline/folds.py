"""Stratified k-fold partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[np.ndarray, ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        train = np.concatenate([f for j, f in enumerate(self.folds) if j != i])
        return np.sort(train), self.folds[i]


def stratified_kfold(targets, k: int = 5, seed: int = 0) -> FoldSplit:
    """Shuffle each class and deal it round-robin over ``k`` folds.

    Every fold receives floor or ceil of (class size / k) samples of each
    class; dealing continues where the previous class stopped so total fold
    sizes also differ by at most one.
    """
    targets = np.asarray(getattr(targets, "targets", targets))
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for cls in np.unique(targets):
        idx = np.flatnonzero(targets == cls)
        if len(idx) < k:
            raise ValueError(f"class {cls} has {len(idx)} samples, fewer than k={k}")
        for i in rng.permutation(idx):
            buckets[pos % k].append(int(i))
            pos += 1
    return FoldSplit(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets))


def stratified_holdout(indices, targets, fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split ``indices`` into (keep, holdout) with about ``fraction`` of each class held out."""
    indices = np.asarray(indices)
    targets = np.asarray(targets)
    rng = np.random.default_rng(seed)
    hold = []
    for cls in np.unique(targets[indices]):
        idx = indices[targets[indices] == cls]
        n = int(round(fraction * len(idx)))
        if len(idx) > 1:
            n = min(max(n, 1), len(idx) - 1)
        else:
            n = 0
        hold.extend(rng.permutation(idx)[:n].tolist())
    hold_arr = np.sort(np.array(hold, dtype=np.int64))
    keep = np.setdiff1d(indices, hold_arr)
    return keep, hold_arr
