"""Bayesian ridge regression fit by marginal-likelihood maximization.

The noise precision ``alpha`` and weight precision ``lambda`` carry Gamma
hyperpriors and are re-estimated each iteration from the effective number of
well-determined parameters (MacKay's fixed-point updates). The linear system
is solved through the eigendecomposition of the n x n Gram matrix when the
feature dimension exceeds the sample count (the fused-tap regime, d ~ 5e5
with a few hundred rows), and of the d x d scatter matrix otherwise.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .features import feature_matrix_bytes, parse_feature_matrix

ALPHA_CAP = 1e10


@dataclass(frozen=True)
class RidgeHyperPrior:
    """Gamma shape/rate pairs for the two precisions; near-flat by default."""

    alpha_shape: float = 1e-6
    alpha_rate: float = 1e-6
    lambda_shape: float = 1e-6
    lambda_rate: float = 1e-6

    def __post_init__(self) -> None:
        for v in (self.alpha_shape, self.alpha_rate, self.lambda_shape, self.lambda_rate):
            if v < 0:
                raise DataError("Gamma hyperparameters must be non-negative")


@dataclass
class RidgeModel:
    """Fitted posterior: weight mean, intercept pieces and precisions."""

    coef: np.ndarray
    feature_mean: np.ndarray
    y_mean: float
    alpha: float
    lambda_: float
    n_iter: int
    converged: bool
    log_marginal: float
    scores: list[float] = field(default_factory=list)

    @property
    def intercept(self) -> float:
        return self.y_mean - float(self.feature_mean @ self.coef)

    @property
    def n_features(self) -> int:
        return int(self.coef.size)


def _decompose(xc: np.ndarray, solver: str) -> tuple[np.ndarray, np.ndarray, str]:
    """Eigendecomposition of the small side of the centered design matrix.

    Returns (eigenvalues of X^T X restricted to the computed side, basis, path):
    path "gram" gives XX^T = U D U^T; path "scatter" gives X^T X = V D V^T.
    """
    n, d = xc.shape
    if solver == "auto":
        solver = "gram" if d > n else "scatter"
    if solver == "gram":
        gram = (xc @ xc.T).astype(np.float64)
        vals, vecs = np.linalg.eigh(gram)
    elif solver == "scatter":
        scatter = (xc.T @ xc).astype(np.float64)
        vals, vecs = np.linalg.eigh(scatter)
    else:
        raise DataError(f"unknown solver {solver!r}")
    return np.clip(vals, 0.0, None), vecs, solver


def _log_marginal(n, d, eig, alpha, lam, rss, m_sq, prior):
    """Evidence (log marginal likelihood) including the Gamma prior terms."""
    logdet_sigma = -(np.log(lam + alpha * eig).sum() + (d - eig.size) * math.log(lam))
    score = prior.lambda_shape * math.log(lam) - prior.lambda_rate * lam
    score += prior.alpha_shape * math.log(alpha) - prior.alpha_rate * alpha
    score += 0.5 * (
        d * math.log(lam)
        + n * math.log(alpha)
        - alpha * rss
        - lam * m_sq
        + logdet_sigma
        - n * math.log(2 * math.pi)
    )
    return float(score)


def fit(
    X: np.ndarray,
    y: np.ndarray,
    prior: RidgeHyperPrior = RidgeHyperPrior(),
    *,
    alpha_init: float | None = None,
    lambda_init: float | None = None,
    optimize: bool = True,
    tol: float = 1e-4,
    max_iter: int = 300,
    solver: str = "auto",
) -> RidgeModel:
    """Fit the regressor; ``optimize=False`` freezes (alpha, lambda) at their
    initial values and performs a single closed-form solve."""
    X = np.asarray(X)
    if X.dtype != np.float32:
        X = X.astype(np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"need X (n, d) and y (n,), got {X.shape} and {y.shape}")
    n, d = X.shape
    if n < 2 or d < 1:
        raise DataError(f"need at least 2 samples and 1 feature, got n={n}, d={d}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in the training data")

    mu = X.mean(axis=0, dtype=np.float64)
    y_mean = float(y.mean())
    y_var = float(y.var())
    if y_var == 0.0:
        return RidgeModel(
            coef=np.zeros(d), feature_mean=mu, y_mean=y_mean,
            alpha=ALPHA_CAP, lambda_=1.0, n_iter=0, converged=True,
            log_marginal=float("nan"),
        )

    xc = X - mu.astype(X.dtype)
    yc = y - y_mean
    eig, basis, path = _decompose(xc, solver)

    if path == "gram":
        uty = basis.T @ yc  # (n,)
    else:
        xty = (xc.T @ yc.astype(xc.dtype)).astype(np.float64)
        vty = basis.T @ xty  # (d,)

    def solve(alpha: float, lam: float) -> tuple[np.ndarray, float, float]:
        """Posterior mean plus residual and coefficient sums of squares."""
        gain = 1.0 / (eig + lam / alpha)
        if path == "gram":
            dual = basis @ (uty * gain)  # (n,)
            m = (xc.T @ dual.astype(xc.dtype)).astype(np.float64)
            fitted = basis @ (eig * (basis.T @ dual))  # X X^T dual without X
            rss = float(((yc - fitted) ** 2).sum())
            m_sq = float(dual @ fitted)  # m.m = dual^T X X^T dual
        else:
            m = basis @ (vty * gain)  # (d,)
            residual = yc - (xc @ m.astype(xc.dtype)).astype(np.float64)
            rss = float(residual @ residual)
            m_sq = float(m @ m)
        return m, rss, m_sq

    alpha = float(alpha_init) if alpha_init is not None else 1.0 / y_var
    lam = float(lambda_init) if lambda_init is not None else 1.0
    alpha = min(alpha, ALPHA_CAP)

    scores: list[float] = []
    if not optimize:
        m, rss, m_sq = solve(alpha, lam)
        score = _log_marginal(n, d, eig, alpha, lam, rss, m_sq, prior)
        return RidgeModel(
            coef=m, feature_mean=mu, y_mean=y_mean, alpha=alpha, lambda_=lam,
            n_iter=1, converged=True, log_marginal=score, scores=[score],
        )

    m_old = None
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        m, rss, m_sq = solve(alpha, lam)
        scores.append(_log_marginal(n, d, eig, alpha, lam, rss, m_sq, prior))
        if m_old is not None and float(np.abs(m - m_old).max()) < tol:
            converged = True
            break
        m_old = m
        gamma = float((alpha * eig / (lam + alpha * eig)).sum())
        lam_den = m_sq + 2 * prior.lambda_rate
        alpha_den = rss + 2 * prior.alpha_rate
        if lam_den > 0:
            lam = (gamma + 2 * prior.lambda_shape) / lam_den
        if alpha_den > 0:
            alpha = (n - gamma + 2 * prior.alpha_shape) / alpha_den
        alpha = min(alpha, ALPHA_CAP)

    m, rss, m_sq = solve(alpha, lam)
    log_marginal = _log_marginal(n, d, eig, alpha, lam, rss, m_sq, prior)
    return RidgeModel(
        coef=m, feature_mean=mu, y_mean=y_mean, alpha=alpha, lambda_=lam,
        n_iter=iteration, converged=converged, log_marginal=log_marginal,
        scores=scores,
    )


def predict(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Posterior-mean prediction: (X - training mean) @ coef + mean(y)."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(
            f"expected (m, {model.n_features}) features, got shape {X.shape}"
        )
    coef = model.coef.astype(X.dtype) if X.dtype == np.float32 else model.coef
    offset = model.y_mean - float(model.feature_mean @ np.asarray(coef, dtype=np.float64))
    return np.asarray(X @ coef, dtype=np.float64) + offset


MODEL_MAGIC = b"BRM1"


def save_model(model: RidgeModel, path) -> None:
    """JSON header followed by feature mean and coefficients as FMX1 rows."""
    header = {
        "alpha": model.alpha,
        "lambda": model.lambda_,
        "intercept": model.intercept,
        "y_mean": model.y_mean,
        "n_features": model.n_features,
        "n_iter": model.n_iter,
        "converged": model.converged,
        "log_marginal": model.log_marginal,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    matrix = np.stack([model.feature_mean, model.coef])
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(feature_matrix_bytes(matrix, ["feature_mean", "coef"]))


def load_model(path) -> RidgeModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise DataError(f"bad magic in model file {path}")
    (n_json,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8:8 + n_json].decode("utf-8"))
    matrix, ids = parse_feature_matrix(blob[8 + n_json:])
    if ids != ["feature_mean", "coef"]:
        raise DataError(f"unexpected matrix rows {ids} in model file {path}")
    return RidgeModel(
        coef=matrix[1].astype(np.float64),
        feature_mean=matrix[0].astype(np.float64),
        y_mean=float(header["y_mean"]),
        alpha=float(header["alpha"]),
        lambda_=float(header["lambda"]),
        n_iter=int(header["n_iter"]),
        converged=bool(header["converged"]),
        log_marginal=float(header["log_marginal"]),
    )
