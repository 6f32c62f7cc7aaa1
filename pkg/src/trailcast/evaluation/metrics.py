"""Scoring: RMSE, rank-based AUC, ROC curves, interval coverage."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricUnavailable(ValueError):
    """The metric is undefined for this input (e.g. single-class labels)."""


def rmse(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("predictions and truths must be 1-D and equally long")
    if p.size == 0:
        raise ValueError("rmse of an empty sample")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    y = y.astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUnavailable("AUC needs both classes present")
    return s, y, n_pos, n_neg


def auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), from average ranks.

    ``2 * U`` is an integer, so the statistic is formed exactly before the
    single final division.
    """
    s, y, n_pos, n_neg = _binary(scores, labels)
    ranks2 = rankdata(s) * 2.0  # average ranks are half-integers
    u2 = ranks2[y].sum() - n_pos * (n_pos + 1)
    return float(u2 / (2.0 * n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points (fpr, tpr, thresholds) from (0, 0) to (1, 1).

    One point per distinct score, taken in decreasing order; ``thresholds[0]``
    is +inf for the origin.
    """
    s, y, n_pos, n_neg = _binary(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s_sorted[last]]
    return fpr, tpr, thresholds


def trapezoid_area(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def interval_coverage(lower, upper, truths) -> dict:
    """Share of truths inside the closed intervals, and their mean width."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if not (lo.shape == hi.shape == t.shape):
        raise ValueError("lower, upper and truths must have the same shape")
    if np.any(lo > hi):
        raise ValueError("interval with lower > upper")
    if t.size == 0:
        return {"coverage": float("nan"), "mean_width": float("nan"), "n": 0}
    inside = (t >= lo) & (t <= hi)
    return {"coverage": float(inside.mean()), "mean_width": float(np.mean(hi - lo)),
            "n": int(t.size)}
