"""Evaluation metrics: prediction error, goodness of fit, support recovery."""

from __future__ import annotations

import numpy as np


def mspe(pred, truth) -> float:
    """Mean squared prediction error per sample and response coordinate."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 1:
        pred = pred[:, None]
        truth = truth[:, None]
    q, m = pred.shape
    return float(np.sum((pred - truth) ** 2)) / (q * m)


def r_squared(fitted, Y) -> float:
    """1 - sum ||fitted - Y||^2 / sum ||Y - Ybar||^2 over the rows."""
    fitted = np.asarray(fitted, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if fitted.shape != Y.shape:
        raise ValueError(f"shape mismatch {fitted.shape} vs {Y.shape}")
    ybar = Y.mean(axis=0)
    tot = float(np.sum((Y - ybar) ** 2))
    if tot <= 0.0:
        raise ValueError("response has zero total variation")
    return 1.0 - float(np.sum((fitted - Y) ** 2)) / tot


def sens_spec(selected, truth, p: int) -> tuple:
    """(sensitivity, specificity) of a selected index set against the truth."""
    selected = set(int(j) for j in selected)
    truth = set(int(j) for j in truth)
    if not truth:
        raise ValueError("truth support is empty; sensitivity undefined")
    if not truth.issubset(range(p)) or not selected.issubset(range(p)):
        raise ValueError("index sets must be subsets of range(p)")
    inactive = set(range(p)) - truth
    sens = len(selected & truth) / len(truth)
    if not inactive:
        raise ValueError("every predictor is active; specificity undefined")
    spec = len(inactive - selected) / len(inactive)
    return sens, spec
