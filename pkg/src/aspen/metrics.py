"""Classification metrics written out explicitly (no sklearn dependency)."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError

THRESHOLD_GRID = np.round(np.arange(1, 100) / 100.0, 2)


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    return float(np.mean(y_true == y_pred)) if y_true.size else float("nan")


def confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def _per_class_prf(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0).astype(float)
    true = cm.sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred > 0, tp / np.maximum(pred, 1), 0.0)
        recall = np.where(true > 0, tp / np.maximum(true, 1), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / np.maximum(precision + recall, 1e-300), 0.0)
    return precision, recall, f1


def macro_f1(y_true, y_pred, n_classes: int) -> float:
    return float(_per_class_prf(confusion(y_true, y_pred, n_classes))[2].mean())


def macro_recall(y_true, y_pred, n_classes: int) -> float:
    return float(_per_class_prf(confusion(y_true, y_pred, n_classes))[1].mean())


def binary_f1(y_true, y_pred) -> float:
    """F1 of the positive class; 0 when there are no predicted and no true positives."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    tp = np.sum(y_true & y_pred)
    fp = np.sum(~y_true & y_pred)
    fn = np.sum(y_true & ~y_pred)
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


def roc_auc_binary(y_true, scores) -> float:
    """Rank-statistic (Mann-Whitney U) ROC-AUC; ties get half credit."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes present")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_ovr(y_true, probs: np.ndarray) -> float:
    """Unweighted one-vs-rest macro ROC-AUC over classes present in ``y_true``."""
    y = np.asarray(y_true)
    aucs = []
    for k in range(probs.shape[1]):
        pos = y == k
        if pos.any() and (~pos).any():
            aucs.append(roc_auc_binary(pos, probs[:, k]))
    if not aucs:
        raise UndefinedMetricError("ROC-AUC needs at least two classes present")
    return float(np.mean(aucs))


def precision_recall_curve(y_true, scores) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at every distinct score threshold, descending
    thresholds, starting from the (recall=0, precision=1) anchor."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("precision-recall curve needs positive examples")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    cut = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[cut]
    fp = (cut + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return np.r_[0.0, recall], np.r_[1.0, precision]


def pr_auc(y_true, scores) -> float:
    """Trapezoidal area under the precision-recall curve."""
    recall, precision = precision_recall_curve(y_true, scores)
    return float(np.sum(np.diff(recall) * (precision[1:] + precision[:-1]) / 2.0))


def threshold_sweep(probs, labels, grid: np.ndarray = THRESHOLD_GRID) -> tuple[float, float]:
    """Threshold on the 0.01..0.99 grid maximizing F1 (predict positive when
    ``prob >= t``); ties go to the smallest threshold. Returns (t*, F1(t*))."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if np.unique(labels).size < 2:
        raise UndefinedMetricError("threshold sweep needs both classes in the validation labels")
    best_t, best_f1 = float(grid[0]), -1.0
    for t in grid:
        f1 = binary_f1(labels, probs >= t)
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1
