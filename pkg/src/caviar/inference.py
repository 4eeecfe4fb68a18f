"""Asymptotic covariance of the quantile-regression estimator.

The sandwich is V = T^-1 D^-1 A D^-1 with

    A = T^-1 theta (1 - theta) sum_t g_t' g_t
    D = (2 c T)^-1 sum_t I(|y_t - f_t| < c) g_t' g_t

where g_t is the analytic gradient of the quantile path and c a kernel
bandwidth (uniform kernel) for the error density at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import EstimationError
from .models import ModelSpec, QuantilePath, _series, eval_path

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class CovarianceEstimates:
    A_hat: np.ndarray
    D_hat: np.ndarray
    V_hat: np.ndarray
    bandwidth_used: float
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    n_in_band: int


def default_bandwidth(residuals) -> float:
    """median(|residuals|) * T^(-1/3).

    Shrinks to zero while c * sqrt(T) still diverges, as the covariance
    estimator requires, and scales with the residuals.
    """
    r = np.abs(np.asarray(residuals, dtype=float))
    T = r.size
    if T < 30:
        raise EstimationError(f"bandwidth rule needs at least 30 residuals, got {T}")
    if not np.any(r > 0):
        raise EstimationError("all residuals are zero: degenerate fit")
    c = float(np.median(r)) * T ** (-1.0 / 3.0)
    if not c > 0:
        raise EstimationError(
            "median absolute residual is zero: degenerate fit, pass an explicit bandwidth"
        )
    return c


def density_weights(residuals, bandwidth: float) -> np.ndarray:
    """Uniform-kernel estimate of each error density at zero."""
    return (np.abs(residuals) < bandwidth) / (2.0 * bandwidth)


def estimate_covariance(spec: ModelSpec, beta_hat, y, path: QuantilePath | None = None,
                        bandwidth: float | None = None) -> CovarianceEstimates:
    """Sandwich covariance, standard errors and two-sided normal p-values.

    ``path`` must carry gradients evaluated at ``beta_hat``; only its
    in-sample rows are used.  Raises ``EstimationError`` when the density
    matrix is numerically singular.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    _, y_in = _series(y)
    if path is None:
        path = eval_path(spec, beta_hat, y)
    if path.grad is None:
        raise EstimationError("covariance needs a quantile path with gradients")
    T = y_in.shape[0]
    f = np.asarray(path.f[:T])
    G = np.asarray(path.grad[:T])
    if f.shape[0] != T:
        raise EstimationError("quantile path shorter than the in-sample window")
    theta = spec.theta
    res = y_in - f
    c = default_bandwidth(res) if bandwidth is None else float(bandwidth)
    if not c > 0:
        raise EstimationError("bandwidth must be positive")

    A = theta * (1.0 - theta) * (G.T @ G) / T
    w = density_weights(res, c)
    D = (G * w[:, None]).T @ G / T
    A = 0.5 * (A + A.T)
    D = 0.5 * (D + D.T)
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(
            f"density matrix is singular (condition {cond:.3g}); "
            f"increase the bandwidth (currently {c:.4g})"
        )
    Dinv = np.linalg.inv(D)
    V = Dinv @ A @ Dinv / T
    V = 0.5 * (V + V.T)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta_hat / se, np.nan)
    pvals = np.where(np.isfinite(tstat), 2.0 * stats.norm.sf(np.abs(tstat)), np.nan)
    return CovarianceEstimates(A, D, V, c, se, tstat, pvals, T, int(np.count_nonzero(w)))
