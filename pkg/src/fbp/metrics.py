"""Regression metrics: RMSE, MAE and Pearson correlation.

Pearson follows the sample-standard-deviation form
``PC = 1/(n-1) * sum(((p - mean(p))/s_p) * ((t - mean(t))/s_t))``
and is clamped to [-1, 1] against rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError, UndefinedCorrelationError


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 1 or pred.shape != truth.shape:
        raise ShapeError(
            f"predictions and truths must be equal-length vectors, "
            f"got {pred.shape} and {truth.shape}"
        )
    if pred.size == 0:
        raise ShapeError("metrics need at least one sample")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return math.sqrt(float(np.mean((pred - truth) ** 2)))


def mae(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def pearson(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    n = pred.size
    if n < 2:
        raise ShapeError("Pearson correlation needs at least two samples")
    s_pred = pred.std(ddof=1)
    s_truth = truth.std(ddof=1)
    if s_pred == 0.0 or s_truth == 0.0:
        raise UndefinedCorrelationError(
            "Pearson correlation is undefined for a constant input"
        )
    z_pred = (pred - pred.mean()) / s_pred
    z_truth = (truth - truth.mean()) / s_truth
    r = float((z_pred * z_truth).sum() / (n - 1))
    return max(-1.0, min(1.0, r))
