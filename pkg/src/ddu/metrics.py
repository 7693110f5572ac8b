"""Accuracy, expected calibration error and AUROC."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import EmptyInput, LengthMismatch


@dataclass(frozen=True)
class BinnedCalibration:
    edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    mean_accuracy: np.ndarray

    @property
    def ece(self):
        n = self.counts.sum()
        gap = np.abs(self.mean_accuracy - self.mean_confidence)
        return float(np.sum(self.counts / n * np.where(self.counts > 0, gap, 0.0)))


def calibration_bins(confidences, correct, num_bins=15):
    """Equal-width, right-inclusive bins; a confidence of 0 lands in the first bin."""
    conf = np.asarray(confidences, dtype=float).reshape(-1)
    corr = np.asarray(correct, dtype=float).reshape(-1)
    if conf.shape != corr.shape:
        raise LengthMismatch("confidences and correctness flags differ in length")
    if conf.size == 0:
        raise EmptyInput("no predictions")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, num_bins + 1)
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins)
    safe = np.maximum(counts, 1)
    mean_conf = np.bincount(idx, weights=conf, minlength=num_bins) / safe
    mean_acc = np.bincount(idx, weights=corr, minlength=num_bins) / safe
    return BinnedCalibration(edges, counts, mean_conf, mean_acc)


def ece(confidences, correct, num_bins=15):
    """Expected calibration error: sum_b (n_b / N) |acc_b - conf_b|."""
    return calibration_bins(confidences, correct, num_bins).ece


def auroc(scores_positive, scores_negative):
    """Probability a positive outscores a negative, ties counting one half.

    Computed from average ranks (Mann-Whitney U) in O(n log n).
    """
    pos = np.asarray(scores_positive, dtype=float).reshape(-1)
    neg = np.asarray(scores_negative, dtype=float).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise EmptyInput("auroc needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    n_pos, n_neg = pos.size, neg.size
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(pred_labels, true_labels):
    pred = np.asarray(pred_labels).reshape(-1)
    true = np.asarray(true_labels).reshape(-1)
    if pred.shape != true.shape:
        raise LengthMismatch("label vectors differ in length")
    if pred.size == 0:
        raise EmptyInput("no labels")
    return float(np.mean(pred == true))
