"""Recursive conditional-quantile models and their analytic gradients.

Every path lives on the return scale: ``f[t]`` is the conditional
theta-quantile of ``y[t]`` (negative for small theta).  A positive VaR is
``-f[t]``.  The Indirect GARCH square root is taken with a negative sign for
the same reason.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np

from .data import ReturnSeries
from .errors import ConfigError, InfeasibleParameters, NonFinitePath


class Regime(str, Enum):
    CONSTANT = "Constant"
    SAV = "SAV"
    AS = "AS"
    INDIRECT_GARCH = "IndirectGARCH"
    ADAPTIVE = "Adaptive"

    @property
    def n_params(self) -> int:
        return _N_PARAMS[self]

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, name) -> "Regime":
        if isinstance(name, cls):
            return name
        for member in cls:
            if str(name).lower() == member.value.lower():
                return member
        raise ConfigError(f"unknown regime {name!r}; choose from {[m.value for m in cls]}")


_N_PARAMS = {
    Regime.CONSTANT: 1,
    Regime.SAV: 3,
    Regime.AS: 4,
    Regime.INDIRECT_GARCH: 3,
    Regime.ADAPTIVE: 1,
}
_CODES = {
    Regime.CONSTANT: 0,
    Regime.SAV: 1,
    Regime.AS: 2,
    Regime.INDIRECT_GARCH: 3,
    Regime.ADAPTIVE: 4,
}

# init rule: lower empirical quantile of the first INIT_WINDOW in-sample returns
INIT_WINDOW = 300
DEFAULT_ADAPTIVE_G = 10.0


@dataclass(frozen=True)
class ModelSpec:
    regime: Regime
    theta: float
    adaptive_G: float = DEFAULT_ADAPTIVE_G
    init_window: int = INIT_WINDOW
    init_value: float | None = None  # overrides the empirical-quantile start

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime.parse(self.regime))
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.regime is Regime.ADAPTIVE and not self.adaptive_G > 0:
            raise ConfigError(f"adaptive_G must be positive, got {self.adaptive_G}")
        if self.init_window < 1:
            raise ConfigError("init_window must be at least 1")

    @property
    def n_params(self) -> int:
        return self.regime.n_params


@dataclass(frozen=True)
class QuantilePath:
    f: np.ndarray
    grad: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.f)


@dataclass(frozen=True)
class NewsImpactCurve:
    x: np.ndarray
    var_next: np.ndarray
    var_prev: float


def start_signs(spec: ModelSpec) -> np.ndarray:
    """Signs mapping positive-VaR-scale coefficients onto the return scale.

    Multi-start draws live in [0, 1]^p on the positive-VaR scale; for a lower
    quantile the intercept and news slopes of the linear regimes, and the
    adaptive step, are negative on the return scale.
    """
    level = -1.0 if spec.theta < 0.5 else 1.0
    r = spec.regime
    if r is Regime.SAV:
        return np.array([level, 1.0, level])
    if r is Regime.AS:
        return np.array([level, 1.0, level, level])
    if r is Regime.ADAPTIVE:
        return np.array([-1.0])
    if r is Regime.CONSTANT:
        return np.array([level])
    return np.ones(3)


def check_beta(spec: ModelSpec, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != spec.n_params:
        raise ConfigError(
            f"{spec.regime.value} takes {spec.n_params} parameters, got {beta.shape[0]}"
        )
    if not np.all(np.isfinite(beta)):
        raise ConfigError(f"parameter vector has non-finite entries: {beta}")
    return beta


def lower_quantile(values, theta: float) -> float:
    """Order statistic at 1-based rank ceil(theta * n)."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.shape[0]
    k = max(1, math.ceil(theta * n))
    return float(v[k - 1])


def _series(y) -> tuple[np.ndarray, np.ndarray]:
    """(full returns, in-sample returns) for a ReturnSeries or bare array."""
    if isinstance(y, ReturnSeries):
        return np.ascontiguousarray(y.returns), y.in_sample
    arr = np.ascontiguousarray(np.asarray(y, dtype=float))
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ConfigError("return vector must be one-dimensional and non-empty")
    return arr, arr


def initial_value(spec: ModelSpec, y) -> float:
    if spec.init_value is not None:
        return float(spec.init_value)
    _, y_in = _series(y)
    return lower_quantile(y_in[: spec.init_window], spec.theta)


@numba.njit(cache=True)
def _logistic(z):
    # 1 / (1 + exp(z)) without overflow
    if z > 0.0:
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(z))


@numba.njit(cache=True)
def _recursion(code, beta, y, f1, theta, G, want_grad):
    """Run one regime's recursion.

    Returns (f, grad, status, index) with status 0 = ok, 1 = negative
    Indirect GARCH inner expression, 2 = non-finite value; ``index`` is
    the offending period.
    """
    T = y.shape[0]
    p = beta.shape[0]
    f = np.empty(T)
    g = np.zeros((T if want_grad else 0, p))
    if code == 0:
        f[0] = beta[0]
        if want_grad:
            g[0, 0] = 1.0
    else:
        f[0] = f1
    for t in range(1, T):
        fp = f[t - 1]
        yp = y[t - 1]
        if code == 0:
            f[t] = beta[0]
            if want_grad:
                g[t, 0] = 1.0
        elif code == 1:
            ay = abs(yp)
            f[t] = beta[0] + beta[1] * fp + beta[2] * ay
            if want_grad:
                g[t, 0] = 1.0 + beta[1] * g[t - 1, 0]
                g[t, 1] = fp + beta[1] * g[t - 1, 1]
                g[t, 2] = ay + beta[1] * g[t - 1, 2]
        elif code == 2:
            yplus = yp if yp > 0.0 else 0.0
            yminus = -yp if yp < 0.0 else 0.0
            f[t] = beta[0] + beta[1] * fp + beta[2] * yplus + beta[3] * yminus
            if want_grad:
                g[t, 0] = 1.0 + beta[1] * g[t - 1, 0]
                g[t, 1] = fp + beta[1] * g[t - 1, 1]
                g[t, 2] = yplus + beta[1] * g[t - 1, 2]
                g[t, 3] = yminus + beta[1] * g[t - 1, 3]
        elif code == 3:
            inner = beta[0] + beta[1] * fp * fp + beta[2] * yp * yp
            if inner < 0.0:
                return f, g, 1, t
            ft = -math.sqrt(inner)
            f[t] = ft
            if want_grad:
                if ft == 0.0:
                    # d(-sqrt(u)) is unbounded at u = 0
                    return f, g, 2, t
                # d(-sqrt(u)) = du / (2 * ft)
                scale = 0.5 / ft
                g[t, 0] = scale * (1.0 + 2.0 * beta[1] * fp * g[t - 1, 0])
                g[t, 1] = scale * (fp * fp + 2.0 * beta[1] * fp * g[t - 1, 1])
                g[t, 2] = scale * (yp * yp + 2.0 * beta[1] * fp * g[t - 1, 2])
        else:
            s = _logistic(G * (yp - fp))
            f[t] = fp + beta[0] * (s - theta)
            if want_grad:
                g[t, 0] = g[t - 1, 0] * (1.0 + beta[0] * G * s * (1.0 - s)) + (s - theta)
        if not math.isfinite(f[t]):
            return f, g, 2, t
        if want_grad:
            for j in range(p):
                if not math.isfinite(g[t, j]):
                    return f, g, 2, t
    return f, g, 0, -1


@numba.njit(cache=True)
def _recursion_loss(code, beta, y, f1, theta, G):
    """Mean pinball loss of the recursive path; +inf when the path is rejected."""
    T = y.shape[0]
    if code == 0:
        fp = beta[0]
    else:
        fp = f1
    total = 0.0
    for t in range(T):
        if t > 0:
            yp = y[t - 1]
            if code == 0:
                ft = beta[0]
            elif code == 1:
                ft = beta[0] + beta[1] * fp + beta[2] * abs(yp)
            elif code == 2:
                yplus = yp if yp > 0.0 else 0.0
                yminus = -yp if yp < 0.0 else 0.0
                ft = beta[0] + beta[1] * fp + beta[2] * yplus + beta[3] * yminus
            elif code == 3:
                inner = beta[0] + beta[1] * fp * fp + beta[2] * yp * yp
                if inner < 0.0:
                    return np.inf
                ft = -math.sqrt(inner)
            else:
                ft = fp + beta[0] * (_logistic(G * (yp - fp)) - theta)
            if not math.isfinite(ft):
                return np.inf
            fp = ft
        u = y[t] - fp
        if u < 0.0:
            total += (theta - 1.0) * u
        else:
            total += theta * u
    return total / T


def eval_path(spec: ModelSpec, beta, y, gradient: bool = True) -> QuantilePath:
    """Conditional quantile path over the whole series (in- and out-of-sample).

    Raises ``InfeasibleParameters`` for a negative Indirect GARCH inner
    expression and ``NonFinitePath`` if the recursion blows up.
    """
    beta = check_beta(spec, beta)
    y_full, _ = _series(y)
    f1 = initial_value(spec, y)
    f, g, status, idx = _recursion(
        spec.regime.code, beta, y_full, f1, spec.theta, float(spec.adaptive_G), gradient
    )
    if status == 1:
        raise InfeasibleParameters(int(idx))
    if status == 2 or not math.isfinite(f1):
        raise NonFinitePath(int(max(idx, 0)))
    f.setflags(write=False)
    if gradient:
        g.setflags(write=False)
        return QuantilePath(f, g)
    return QuantilePath(f, None)


def one_step(spec: ModelSpec, beta, f_prev: float, y_prev: float) -> float:
    """Apply a single step of the recursion to (f_prev, y_prev)."""
    beta = check_beta(spec, beta)
    f, _, status, _ = _recursion(
        spec.regime.code, beta, np.array([y_prev, 0.0]), float(f_prev),
        spec.theta, float(spec.adaptive_G), False,
    )
    if status == 1:
        raise InfeasibleParameters(0, f"negative Indirect GARCH inner expression at x={y_prev}")
    return float(f[1])


def news_impact(spec: ModelSpec, beta, var_prev: float, x_grid) -> NewsImpactCurve:
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ConfigError("x_grid must be a non-empty vector")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("x_grid must be strictly increasing")
    values = np.array([one_step(spec, beta, var_prev, xi) for xi in x])
    return NewsImpactCurve(x, values, float(var_prev))


def unconditional_quantile_var(y, theta: float, window: int | str = "expanding") -> np.ndarray:
    """Rolling lower empirical theta-quantile (a constant-only quantile regression).

    The value at period t uses observations up to and including t.  With
    ``window="expanding"`` the result has one entry per period; with an
    integer window ``w`` it starts at period ``w`` (length ``T - w + 1``).
    """
    y_arr, _ = _series(y)
    if not 0.0 < theta < 1.0:
        raise ConfigError(f"theta must lie in (0, 1), got {theta}")
    T = y_arr.shape[0]
    if window == "expanding":
        out = np.empty(T)
        for t in range(T):
            n = t + 1
            k = max(1, math.ceil(theta * n))
            out[t] = np.partition(y_arr[:n], k - 1)[k - 1]
        return out
    w = int(window)
    if w < 1 or w > T:
        raise ConfigError(f"window {w} larger than available history ({T})")
    k = max(1, math.ceil(theta * w))
    out = np.empty(T - w + 1)
    for i in range(T - w + 1):
        out[i] = np.partition(y_arr[i : i + w], k - 1)[k - 1]
    return out
