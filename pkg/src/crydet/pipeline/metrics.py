"""Confusion-matrix metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision_defined(self) -> bool:
        return self.tp + self.fp > 0

    @property
    def recall_defined(self) -> bool:
        return self.tp + self.fn > 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.precision_defined else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.recall_defined else 0.0

    @property
    def f1_defined(self) -> bool:
        return self.tp > 0

    @property
    def f1(self) -> float:
        # 2PR / (P + R) rewritten in counts: one rounding instead of several
        return 2 * self.tp / (2 * self.tp + self.fp + self.fn) if self.tp > 0 else 0.0

    @property
    def undefined(self) -> list[str]:
        flags = []
        if not self.precision_defined:
            flags.append("precision")
        if not self.recall_defined:
            flags.append("recall")
        if not self.f1_defined:
            flags.append("f1")
        return flags

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1, "undefined": self.undefined,
        }


def confusion(predictions, labels) -> MetricsReport:
    p = np.asarray(predictions).astype(bool)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise ValueError(f"{p.shape} predictions vs {y.shape} labels")
    return MetricsReport(
        tp=int(np.sum(p & y)), fp=int(np.sum(p & ~y)), fn=int(np.sum(~p & y)), tn=int(np.sum(~p & ~y))
    )


def metrics_from_scores(probabilities, labels, threshold: float = 0.5) -> MetricsReport:
    return confusion(np.asarray(probabilities) >= threshold, labels)


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def summarize(reports: list[MetricsReport]) -> dict[str, dict[str, float]]:
    """Unweighted mean and population std of each ratio across reports (e.g. folds)."""
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def format_table(rows: list[tuple[str, MetricsReport]]) -> str:
    header = f"{'condition':<12}{'accuracy':>10}{'precision':>11}{'recall':>9}{'f1':>9}"
    lines = [header, "-" * len(header)]
    for name, r in rows:
        flag = " *" if r.undefined else ""
        lines.append(
            f"{name:<12}{100 * r.accuracy:>9.1f}%{100 * r.precision:>10.1f}%"
            f"{100 * r.recall:>8.1f}%{100 * r.f1:>8.1f}%{flag}"
        )
    if any(r.undefined for _, r in rows):
        lines.append("* some ratios undefined (reported as 0)")
    return "\n".join(lines)
