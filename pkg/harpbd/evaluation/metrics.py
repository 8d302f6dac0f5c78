from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix as _sk_confusion_matrix
from sklearn.metrics import precision_recall_curve

from harpbd.errors import ContractViolation


def confusion_matrix(truth: Sequence[int] | np.ndarray, predicted: Sequence[int] | np.ndarray, n_classes: int) -> np.ndarray:
    """Rows are truth, columns are prediction."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ContractViolation(f"{truth.shape[0]} labels but {predicted.shape[0]} predictions")
    if truth.size == 0:
        return np.zeros((n_classes, n_classes), dtype=np.int64)
    return _sk_confusion_matrix(truth, predicted, labels=list(range(n_classes))).astype(np.int64)


def _checked(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.size == 0:
        raise ContractViolation(f"confusion matrix must be square and non-empty, got {cm.shape}")
    if cm.sum() == 0:
        raise ContractViolation("confusion matrix has no entries")
    return cm


def accuracy(cm: np.ndarray) -> float:
    cm = _checked(cm)
    return float(np.trace(cm) / cm.sum())


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    cm = _checked(cm).astype(np.float64)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(cm: np.ndarray) -> float:
    return float(per_class_f1(cm).mean())


def average_precision(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """Step-wise average precision with tied scores forming one threshold, in exact arithmetic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ContractViolation(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    positives = int(labels.sum())
    if positives == 0:
        raise ContractViolation("average precision needs at least one positive label")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[sorted_scores[1:] != sorted_scores[:-1], True])
    tp = np.cumsum(sorted_labels)[ends]
    seen = ends + 1

    ap = Fraction(0)
    previous_tp = 0
    for hits, count in zip(tp.tolist(), seen.tolist()):
        if hits != previous_tp:
            ap += Fraction(hits - previous_tp, positives) * Fraction(hits, count)
            previous_tp = hits
    return float(ap)


@dataclass(frozen=True, eq=False)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    auc: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"recall": self.recall, "precision": self.precision})


def pr_auc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> PRCurve:
    auc = average_precision(scores, labels)
    precision, recall, _ = precision_recall_curve(np.asarray(labels), np.asarray(scores, dtype=np.float64))
    return PRCurve(recall=recall[::-1].copy(), precision=precision[::-1].copy(), auc=auc)
