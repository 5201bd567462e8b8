"""Binary classification metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import UsageError

METRIC_COLUMNS = ("acc", "sen", "spec", "mcc", "auc", "ap")


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    acc: float
    sen: float
    spec: float
    mcc: float
    auc: float  # nan when only one class is present
    ap: float
    threshold: float = 0.5

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def mcc_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(den)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision/recall sweep over distinct thresholds."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order] == 1
    tps = np.cumsum(y)
    # last index of each block of tied scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = tps[ends]
    precision = tp / (ends + 1)
    recall = tp / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def confusion(scores, labels, threshold: float = 0.5) -> tuple[int, int, int, int]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pred = scores >= threshold
    pos = labels == 1
    return (int(np.sum(pred & pos)), int(np.sum(~pred & ~pos)), int(np.sum(pred & ~pos)), int(np.sum(~pred & pos)))


def compute_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise UsageError(f"{scores.size} scores vs {labels.size} labels")
    if scores.size == 0:
        raise UsageError("cannot score an empty set")
    if not np.all(np.isin(labels, (0, 1))):
        raise UsageError("labels must be 0 or 1")
    tp, tn, fp, fn = confusion(scores, labels, threshold)
    return MetricsReport(
        tp=tp, tn=tn, fp=fp, fn=fn,
        acc=(tp + tn) / scores.size,
        sen=_ratio(tp, tp + fn),
        spec=_ratio(tn, tn + fp),
        mcc=mcc_from_counts(tp, tn, fp, fn),
        auc=roc_auc(scores, labels),
        ap=average_precision(scores, labels),
        threshold=threshold,
    )
