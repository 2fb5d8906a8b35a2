"""Binary-classification metrics: confusion counts at a threshold, the derived
ratio metrics, ROC curve and trapezoidal AUC, and report rendering.

Label 1 (phishing) is the positive class. A score counts as positive when it
is >= the threshold. Ratios with a zero denominator are reported as absent
(None) rather than silently coerced to 0 or 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ThresholdMetrics:
    accuracy: float | None
    precision: float | None
    tpr: float | None
    fpr: float | None
    f1: float | None


@dataclass
class EvalReport:
    counts: ConfusionCounts
    accuracy: float | None
    precision: float | None
    tpr: float | None
    fpr: float | None
    f1: float | None
    roc_points: list[tuple[float, float]] | None
    auc: float | None
    threshold: float
    timing: dict | None = None

    def to_dict(self) -> dict:
        return {
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp,
                       "tn": self.counts.tn, "fn": self.counts.fn},
            "accuracy": self.accuracy,
            "precision": self.precision,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "f1": self.f1,
            "roc_points": None if self.roc_points is None
            else [[float(x), float(y)] for x, y in self.roc_points],
            "auc": self.auc,
            "threshold": self.threshold,
            "timing": self.timing,
        }


def confusion(scores: Sequence[float], labels: Sequence[int],
              threshold: float = 0.5) -> ConfusionCounts:
    """Tally confusion counts; prediction is 1 iff score >= threshold."""
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores vs {len(labels)} labels")
    tp = fp = tn = fn = 0
    for score, label in zip(scores, labels):
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        predicted = bool(score >= threshold)
        if label == 1:
            tp += predicted
            fn += not predicted
        else:
            fp += predicted
            tn += not predicted
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def threshold_metrics(counts: ConfusionCounts) -> ThresholdMetrics:
    """Accuracy, precision, TPR, FPR and F1 from confusion counts."""
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    tpr = _ratio(counts.tp, counts.tp + counts.fn)
    if precision is None or tpr is None or precision + tpr == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * tpr / (precision + tpr)
    return ThresholdMetrics(
        accuracy=_ratio(counts.tp + counts.tn, counts.total),
        precision=precision,
        tpr=tpr,
        fpr=_ratio(counts.fp, counts.tn + counts.fp),
        f1=f1)


def roc_auc(scores: Sequence[float], labels: Sequence[int]
            ) -> tuple[list[tuple[float, float]], float]:
    """ROC curve and trapezoidal AUC.

    Every distinct score is swept as a threshold in descending order, giving
    one (FPR, TPR) point per threshold plus the (0, 0) endpoint; the final
    threshold yields (1, 1). The trapezoidal integral equals the fraction of
    (positive, negative) pairs ranked correctly, ties counted 1/2.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels == 1)
    cum_fp = np.cumsum(sorted_labels == 0)
    # last index of each tie group = positions where the next score differs
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.append(boundary, len(sorted_scores) - 1)
    points = [(0.0, 0.0)]
    points += [(float(cum_fp[i]) / n_neg, float(cum_tp[i]) / n_pos) for i in ends]
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, float(auc)


def evaluate(scores: Sequence[float], labels: Sequence[int],
             threshold: float = 0.5) -> EvalReport:
    """Full report at one threshold. ROC/AUC are absent when only one class is
    present in the labels."""
    counts = confusion(scores, labels, threshold)
    tm = threshold_metrics(counts)
    try:
        roc_points, auc = roc_auc(scores, labels)
    except ValueError:
        roc_points, auc = None, None
    return EvalReport(counts=counts, accuracy=tm.accuracy, precision=tm.precision,
                      tpr=tm.tpr, fpr=tm.fpr, f1=tm.f1,
                      roc_points=roc_points, auc=auc, threshold=threshold)


def roc_csv_lines(roc_points: Sequence[tuple[float, float]]) -> list[str]:
    """Two-column CSV (fpr, tpr) for external plotting."""
    return ["fpr,tpr"] + [f"{fpr:.10g},{tpr:.10g}" for fpr, tpr in roc_points]


def _cell(value: float | None, width: int) -> str:
    return ("-" if value is None else f"{value:.2f}").ljust(width)


def render_comparison(rows: list[dict]) -> str:
    """Fixed-width comparison table: one row per model with accuracy,
    precision, TPR, F1, AUC and training time."""
    header = (f"{'Model':<16}{'Accuracy':<10}{'Precision':<11}"
              f"{'TPR':<7}{'F1':<7}{'AUC':<7}{'Time':<10}")
    lines = [header, "-" * len(header)]
    for row in rows:
        time_s = row.get("train_time_s")
        time_text = "-" if time_s is None else f"{time_s:.1f}s"
        lines.append(f"{row['model']:<16}"
                     f"{_cell(row.get('accuracy'), 10)}"
                     f"{_cell(row.get('precision'), 11)}"
                     f"{_cell(row.get('tpr'), 7)}"
                     f"{_cell(row.get('f1'), 7)}"
                     f"{_cell(row.get('auc'), 7)}"
                     f"{time_text:<10}")
    return "\n".join(lines)
