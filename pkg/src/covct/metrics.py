"""Binary classification metrics: confusion matrix, rates, ROC/AUC and accuracy intervals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from covct.errors import EmptyInput, LengthMismatch, SingleClass

Z_SCORES = {90: 1.645, 95: 1.960, 99: 2.576}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if self.total < 1:
            raise EmptyInput("confusion matrix needs at least one observation")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Sequence[int], labels: Sequence[int], positive: int = 0) -> ConfusionMatrix:
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if len(labels) == 0:
        raise EmptyInput("no observations")
    p = np.asarray(predictions) == positive
    t = np.asarray(labels) == positive
    return ConfusionMatrix(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & ~t)), int(np.sum(~p & t)), positive)


def _pct(num: float, den: float) -> Optional[float]:
    return 100.0 * num / den if den else None


def derive_metrics(cm: ConfusionMatrix) -> Dict[str, Optional[float]]:
    """Percentages; a metric with a zero denominator is ``None`` (undefined)."""
    precision = _pct(cm.tp, cm.tp + cm.fp)
    sensitivity = _pct(cm.tp, cm.tp + cm.fn)
    if precision is None or sensitivity is None or precision + sensitivity == 0:
        f1 = None
    else:
        f1 = 2 * precision * sensitivity / (precision + sensitivity)
    return {
        "accuracy": _pct(cm.tp + cm.tn, cm.total),
        "precision": precision,
        "sensitivity": sensitivity,
        "specificity": _pct(cm.tn, cm.tn + cm.fp),
        "f1": f1,
    }


@dataclass(frozen=True)
class RocCurve:
    points: Tuple[Tuple[float, float], ...]  # (fpr, tpr) from (0, 0) to (1, 1)
    thresholds: Tuple[float, ...]
    auc: float


def roc_auc(scores: Sequence[float], labels: Sequence[int], positive: int = 0) -> RocCurve:
    """Sweep every distinct score as a threshold (``score >= thr`` predicts positive).

    Equal scores form a single step, so the trapezoidal area equals the
    pair-ordering statistic with ties counted as one half.
    """
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) == positive
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(pos)[ends]
    fps = np.cumsum(~pos)[ends]
    tp_prev = fp_prev = 0
    area2 = 0  # twice the area times n_pos * n_neg, kept integral
    for tp, fp in zip(tps.tolist(), fps.tolist()):
        area2 += (fp - fp_prev) * (tp + tp_prev)
        tp_prev, fp_prev = tp, fp
    points = [(0.0, 0.0)] + [(fp / n_neg, tp / n_pos) for tp, fp in zip(tps.tolist(), fps.tolist())]
    return RocCurve(tuple(points), tuple(s[ends].tolist()), area2 / (2 * n_pos * n_neg))


def accuracy_ci(accuracy: float, n: int, confidence: int = 95) -> Tuple[float, float]:
    """Normal-approximation binomial interval for an accuracy given in percent, clipped to [0, 100]."""
    if not 0 <= accuracy <= 100:
        raise ValueError("accuracy must be a percentage")
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        z = Z_SCORES[int(confidence)]
    except KeyError:
        raise ValueError(f"confidence must be one of {sorted(Z_SCORES)}") from None
    half = z * math.sqrt(accuracy * (100.0 - accuracy) / n)
    return max(0.0, accuracy - half), min(100.0, accuracy + half)


@dataclass(frozen=True)
class PredictionRow:
    id: str
    score_covid: float
    predicted_class: int
    true_class: int


CSV_HEADER = ("id", "score_covid", "predicted_class", "true_class")


def read_predictions(path) -> List[PredictionRow]:
    """Parse a predictions CSV; raises ``ValueError`` on any malformed content."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(rec)}")
            score = float(rec[1])
            pred, true = int(rec[2]), int(rec[3])
            if not math.isfinite(score) or pred not in (0, 1) or true not in (0, 1):
                raise ValueError(f"line {lineno}: invalid values")
            rows.append(PredictionRow(rec[0], score, pred, true))
    if not rows:
        raise ValueError("no prediction rows")
    return rows
