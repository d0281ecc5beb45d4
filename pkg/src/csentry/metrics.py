"""Confusion counts and the five-metric report.

Malicious is the positive class throughout: a false positive is a benign
window flagged as an attack, a false negative is an attack window missed.
All five metrics are percentages and render with two decimals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

METRIC_NAMES = ("accuracy", "precision", "recall", "fp_rate", "fn_rate")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with Malicious as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise DataError(f"confusion count {name} must be a non-negative "
                                f"integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """The five percentage metrics plus their confusion counts.

    A ratio whose denominator is zero is reported as 0.0 and named in
    ``flags`` (e.g. ``precision_undefined`` when nothing was flagged
    malicious), so downstream tables never divide by zero silently.
    """

    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    fp_rate: float
    fn_rate: float
    flags: tuple[str, ...] = ()

    def as_row(self) -> dict[str, str]:
        """Two-decimal rendering of the five metrics, in table order."""
        return {name: f"{getattr(self, name):.2f}" for name in METRIC_NAMES}


def _ratio(numerator: int, denominator: int, name: str, flags: list[str]) -> float:
    if denominator == 0:
        flags.append(f"{name}_undefined")
        return 0.0
    return 100.0 * numerator / denominator


def report_from_confusion(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise DataError("cannot compute metrics over zero windows")
    flags: list[str] = []
    return MetricsReport(
        confusion=cm,
        accuracy=100.0 * (cm.tp + cm.tn) / cm.total,
        precision=_ratio(cm.tp, cm.tp + cm.fp, "precision", flags),
        recall=_ratio(cm.tp, cm.tp + cm.fn, "recall", flags),
        fp_rate=_ratio(cm.fp, cm.fp + cm.tn, "fp_rate", flags),
        fn_rate=_ratio(cm.fn, cm.fn + cm.tp, "fn_rate", flags),
        flags=tuple(flags),
    )


def confusion_from_predictions(
    probabilities: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> ConfusionMatrix:
    """Counts from probabilities and 0/1 labels; Malicious iff p >= threshold."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise DataError(f"prediction shape {p.shape} != label shape {y.shape}")
    if p.size == 0:
        raise DataError("cannot evaluate zero predictions")
    flagged = p >= threshold
    positive = y == 1.0
    return ConfusionMatrix(
        tp=int(np.sum(flagged & positive)),
        fp=int(np.sum(flagged & ~positive)),
        tn=int(np.sum(~flagged & ~positive)),
        fn=int(np.sum(~flagged & positive)),
    )
