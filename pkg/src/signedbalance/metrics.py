"""Classification metrics and the paired significance test used for reporting."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import betainc


def _validate(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.size == 0:
        raise ValueError("empty inputs")
    if p.shape != y.shape:
        raise ValueError("predictions and labels must have equal length")
    for arr, name in ((p, "predictions"), (y, "labels")):
        if not np.isin(arr, (-1, 1)).all():
            raise ValueError(f"{name} must take values in {{+1, -1}}")
    return p, y


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of exact sign matches."""
    p, y = _validate(predictions, labels)
    return float(np.mean(p == y))


def _f1(p: np.ndarray, y: np.ndarray, cls: int) -> float:
    tp = int(np.sum((p == cls) & (y == cls)))
    fp = int(np.sum((p == cls) & (y != cls)))
    fn = int(np.sum((p != cls) & (y == cls)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def macro_f1(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over the sign classes.

    A class absent from both predictions and labels is left out of the mean
    entirely, so degenerate single-class inputs score on the present class
    alone instead of being halved.
    """
    p, y = _validate(predictions, labels)
    scores = []
    for cls in (1, -1):
        if np.any(p == cls) or np.any(y == cls):
            scores.append(_f1(p, y, cls))
    return float(np.mean(scores))


def confusion_counts(predictions, labels) -> dict[str, int]:
    """Independent confusion-matrix recount backing the metric cross-checks."""
    p, y = _validate(predictions, labels)
    return {
        "tp": int(np.sum((p == 1) & (y == 1))),
        "fp": int(np.sum((p == 1) & (y == -1))),
        "fn": int(np.sum((p == -1) & (y == 1))),
        "tn": int(np.sum((p == -1) & (y == -1))),
    }


def student_t_sf(t: float, df: int) -> float:
    """Survival function of Student's t via the regularized incomplete beta."""
    if df < 1:
        raise ValueError("degrees of freedom must be positive")
    x = df / (df + t * t)
    tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p-value).

    Degenerate zero-variance differences give p = 1 when the means agree and
    p = 0 otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two paired observations")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * student_t_sf(abs(t), n - 1)
    return t, min(p, 1.0)


def significance_stars(p: float) -> str:
    """Asterisk convention: * below 0.05, ** below 0.01, *** below 0.001."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""
