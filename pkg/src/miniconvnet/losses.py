"""Cross-entropy losses, accuracy and one-vs-rest confusion counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

PROB_FLOOR = 1e-12


@dataclass
class LossValue:
    value: float
    grad: np.ndarray  # d(loss)/d(pre-softmax logits)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total


def _check_one_hot(one_hot: np.ndarray) -> None:
    ok = np.isin(one_hot, (0, 1)).all(axis=1) & (one_hot.sum(axis=1) == 1)
    if not ok.all():
        raise InputError(f"rows {np.flatnonzero(~ok).tolist()} are not one-hot")


def one_hot(labels, class_count: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise InputError(f"labels must lie in [0, {class_count})")
    out = np.zeros((labels.size, class_count), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def categorical_cross_entropy(probs: np.ndarray, one_hot: np.ndarray) -> LossValue:
    """Mean negative log-likelihood of the true class, in nats.

    The gradient is w.r.t. the logits that produced ``probs`` through a
    softmax: ``(probs - one_hot) / batch``.
    """
    if probs.shape != one_hot.shape or probs.ndim != 2:
        raise InputError(f"probs {probs.shape} and targets {one_hot.shape} must be equal [b, k]")
    _check_one_hot(one_hot)
    b = probs.shape[0]
    p_true = np.sum(probs * one_hot, axis=1, dtype=np.float64)
    value = float(-np.mean(np.log(np.clip(p_true, PROB_FLOOR, 1.0))))
    grad = (probs - one_hot.astype(probs.dtype)) / probs.dtype.type(b)
    return LossValue(value, grad)


def binary_cross_entropy(pred, target) -> float:
    """``-(1/N) * sum(y*log(p) + (1-y)*log(1-p))`` with ``p`` clamped away from 0 and 1."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape or pred.size == 0:
        raise InputError("pred and target must be non-empty and the same length")
    if not np.isin(target, (0.0, 1.0)).all():
        raise InputError("targets must be 0 or 1")
    p = np.clip(pred, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def _labels(pred_labels, true_labels):
    pred = np.asarray(pred_labels, dtype=np.int64).ravel()
    true = np.asarray(true_labels, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise InputError("prediction and truth lengths differ")
    return pred, true


def confusion_counts(pred_labels, true_labels, class_count: int) -> list[ConfusionCounts]:
    """Per-class TP/TN/FP/FN treating each class in turn as the positive one."""
    pred, true = _labels(pred_labels, true_labels)
    for arr in (pred, true):
        if arr.size and (arr.min() < 0 or arr.max() >= class_count):
            raise InputError(f"labels must lie in [0, {class_count})")
    counts = []
    for k in range(class_count):
        p, t = pred == k, true == k
        tp = int(np.sum(p & t))
        fp = int(np.sum(p & ~t))
        fn = int(np.sum(~p & t))
        counts.append(ConfusionCounts(tp, pred.size - tp - fp - fn, fp, fn))
    return counts


def accuracy(pred_labels, true_labels) -> float:
    pred, true = _labels(pred_labels, true_labels)
    if pred.size == 0:
        raise InputError("accuracy of an empty set is undefined")
    return float(np.mean(pred == true))
