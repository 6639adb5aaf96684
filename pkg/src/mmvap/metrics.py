"""Hold/shift classification metrics.  Shift is the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadProportions, EmptyClass, UndefinedF1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def p(self) -> int:
        return self.tp + self.fn

    @property
    def n(self) -> int:
        return self.tn + self.fp

    def flipped(self) -> "ConfusionCounts":
        """Counts with hold as the positive class."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


def confusion(scores, truths, threshold: float) -> ConfusionCounts:
    """A shift is predicted when the score is strictly above ``threshold``."""
    pred = np.asarray(scores) > threshold
    truth = np.asarray(truths).astype(bool)
    return ConfusionCounts(tp=int((pred & truth).sum()), fp=int((pred & ~truth).sum()),
                           fn=int((~pred & truth).sum()), tn=int((~pred & ~truth).sum()))


def f1(counts: ConfusionCounts) -> float:
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        raise UndefinedF1("F1 undefined: no positives and no positive predictions")
    return 2 * counts.tp / denom


def weighted_f1(f1_shift: float, f1_hold: float, rho_s: float, rho_h: float) -> float:
    if rho_s < 0 or rho_h < 0 or abs(rho_s + rho_h - 1.0) > 1e-9:
        raise BadProportions(f"proportions {rho_s} + {rho_h} must be non-negative and sum to 1")
    return rho_s * f1_shift + rho_h * f1_hold


def balanced_accuracy(counts: ConfusionCounts) -> float:
    if counts.p == 0 or counts.n == 0:
        raise EmptyClass("balanced accuracy needs both shifts and holds")
    return 0.5 * (counts.tp / counts.p + counts.tn / counts.n)


def _safe_f1(counts: ConfusionCounts) -> float:
    try:
        return f1(counts)
    except UndefinedF1:
        return 0.0


def metric_bundle(counts: ConfusionCounts) -> dict:
    """F1 shift/hold, weighted F1 and balanced accuracy from one confusion table."""
    total = counts.p + counts.n
    rho_s = counts.p / total
    f1_s, f1_h = _safe_f1(counts), _safe_f1(counts.flipped())
    return {"f1_shift": f1_s, "f1_hold": f1_h,
            "f1_weighted": weighted_f1(f1_s, f1_h, rho_s, 1.0 - rho_s),
            "balanced_accuracy": balanced_accuracy(counts)}


def always_hold_counts(truths) -> ConfusionCounts:
    truth = np.asarray(truths).astype(bool)
    return ConfusionCounts(tp=0, fp=0, fn=int(truth.sum()), tn=int((~truth).sum()))
