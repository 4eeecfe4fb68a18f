"""Regression-quantile (pinball) loss and the hit sequence."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .models import ModelSpec, _recursion_loss, _series, check_beta, initial_value


def _pair(y, f) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.shape != f.shape:
        raise ConfigError(f"length mismatch: y has {y.shape}, f has {f.shape}")
    return y, f


def rq_loss(theta: float, y, f) -> float:
    """Mean of [theta - I(y < f)] * (y - f); zero iff y == f everywhere."""
    y, f = _pair(y, f)
    if y.size == 0:
        raise ConfigError("rq_loss needs at least one observation")
    if not 0.0 < theta < 1.0:
        raise ConfigError(f"theta must lie in (0, 1), got {theta}")
    u = y - f
    return float(np.mean(np.where(u < 0.0, theta - 1.0, theta) * u))


def hit_series(theta: float, y, f) -> np.ndarray:
    """I(y < f) - theta; a tie counts as no exceedance."""
    y, f = _pair(y, f)
    return np.where(y < f, 1.0 - theta, -theta)


def make_objective(spec: ModelSpec, y):
    """Bind the in-sample loss of ``spec`` on ``y`` into a callable of beta.

    The starting quantile is computed once here, so repeated evaluations
    inside the optimizer only pay for the recursion.
    """
    _, y_in = _series(y)
    y_in = np.ascontiguousarray(y_in, dtype=float)
    f1 = initial_value(spec, y)
    code = spec.regime.code
    theta = float(spec.theta)
    G = float(spec.adaptive_G)
    p = spec.n_params

    def objective_fn(beta) -> float:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (p,) or not np.all(np.isfinite(beta)):
            return np.inf
        return float(_recursion_loss(code, beta, y_in, f1, theta, G))

    return objective_fn


def objective(spec: ModelSpec, beta, y) -> float:
    """In-sample loss of the model; +inf for rejected (infeasible or exploding) parameters."""
    beta = check_beta(spec, beta)
    return make_objective(spec, y)(beta)
