"""Confusion metrics and ROC/AUC.

Formulas (percent scale):
    precision = TP / (FP + TP) * 100
    accuracy  = (TP + TN) / (TP + FP + FN + TN) * 100
    recall    = TP / (TP + FN) * 100
    f1        = 2 * precision * recall / (precision + recall)

A zero denominator yields 0 for the affected metric, recorded in the
report's `degenerate` tuple instead of raising, so sweeps stay total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass
class MetricsReport:
    precision: float
    accuracy: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: Optional[float] = None
    auc: Optional[float] = None
    degenerate: Tuple[str, ...] = ()


def confusion_metrics(tp: int, fp: int, fn: int, tn: int) -> MetricsReport:
    total = tp + fp + fn + tn
    if min(tp, fp, fn, tn) < 0 or total <= 0:
        raise ValueError("counts must be nonnegative with a positive total")
    degenerate = []
    if fp + tp > 0:
        precision = 100.0 * tp / (fp + tp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if tp + fn > 0:
        recall = 100.0 * tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    accuracy = 100.0 * (tp + tn) / total
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return MetricsReport(precision=precision, accuracy=accuracy, recall=recall,
                         f1=f1, tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn),
                         degenerate=tuple(degenerate))


def confusion_counts(predictions, labels):
    """(tp, fp, fn, tn) from 0/1 prediction and label vectors."""
    predictions = np.asarray(predictions).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    tp = int(np.sum(predictions & labels))
    fp = int(np.sum(predictions & ~labels))
    fn = int(np.sum(~predictions & labels))
    tn = int(np.sum(~predictions & ~labels))
    return tp, fp, fn, tn


def roc_curve(scores, labels):
    """ROC points by sweeping thresholds over the sorted unique scores.

    Returns (fpr, tpr, thresholds); the leading point is (0, 0) at
    threshold +inf.  Tied scores move along the curve jointly, so the
    trapezoidal area equals the pairwise rank statistic
    P(score_anom > score_norm) + 0.5 P(tie).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc requires both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels)
    cum_fp = np.cumsum(~sorted_labels)
    # indices where a tie group ends
    boundary = np.flatnonzero(np.diff(sorted_scores) != 0)
    idx = np.concatenate([boundary, [scores.size - 1]])
    tpr = np.concatenate([[0.0], cum_tp[idx] / n_pos])
    fpr = np.concatenate([[0.0], cum_fp[idx] / n_neg])
    thresholds = np.concatenate([[np.inf], sorted_scores[idx]])
    return fpr, tpr, thresholds


def roc_auc(scores, labels):
    """((fpr, tpr, thresholds), auc) via trapezoidal integration."""
    fpr, tpr, thr = roc_curve(scores, labels)
    auc = float(np.trapezoid(tpr, fpr))
    return (fpr, tpr, thr), auc
