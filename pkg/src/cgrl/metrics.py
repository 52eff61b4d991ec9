"""Accuracy, ROC-AUC, plug-in mutual information, MI stability, confidence histograms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _ids(ids, n):
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("empty id set")
    return ids


def accuracy(pred_labels, true_labels, ids=None) -> float:
    pred, true = np.asarray(pred_labels), np.asarray(true_labels)
    ids = _ids(ids, len(true))
    return float(np.mean(pred[ids] == true[ids]))


def roc_auc(scores, binary_labels, ids=None) -> float:
    """P(score of random positive > random negative), ties counted as 1/2."""
    s, y = np.asarray(scores, dtype=float), np.asarray(binary_labels)
    ids = _ids(ids, len(y))
    s, y = s[ids], y[ids].astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes among ids")
    # midranks handle ties
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def mutual_information(pred_labels, true_labels, ids=None) -> float:
    """Plug-in I(pred; true) in nats from the empirical joint."""
    a, b = np.asarray(pred_labels), np.asarray(true_labels)
    ids = _ids(ids, len(b))
    a, b = a[ids], b[ids]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    return mi_from_counts(joint)


def mi_from_counts(joint) -> float:
    joint = np.asarray(joint, dtype=float)
    p = joint / joint.sum()
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max(0.0, (p[nz] * np.log(p[nz] / (pa @ pb)[nz])).sum()))


@dataclass
class MiSeries:
    values: list[float] = field(default_factory=list)
    split: str = "OOD-val"
    model: str = ""

    def append(self, v: float) -> None:
        if v < 0:
            raise ValueError("mutual information is non-negative")
        self.values.append(float(v))


def mi_stability(series, window: int = 100) -> float:
    """Sample standard deviation of the trailing ``window`` values."""
    values = series.values if isinstance(series, MiSeries) else list(series)
    if window <= 0:
        raise ValueError("window must be positive")
    if window > len(values):
        raise ValueError(f"window {window} exceeds series length {len(values)}")
    if window == 1:
        return 0.0
    return float(np.std(values[-window:], ddof=1))


def confidence_histogram(probabilities, bins: int = 10) -> np.ndarray:
    """Densities over equal-width bins on [0, 1]; the last bin is closed."""
    p = np.asarray(probabilities, dtype=float)
    if bins < 2:
        raise ValueError("need at least two bins")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("confidences must lie in [0, 1]")
    dens, _ = np.histogram(p, bins=bins, range=(0.0, 1.0), density=True)
    return dens


def saturated_fraction(probabilities, threshold: float = 0.99) -> float:
    """Fraction of confidences in (threshold, 1]."""
    p = np.asarray(probabilities, dtype=float)
    return float(np.mean(p > threshold))
