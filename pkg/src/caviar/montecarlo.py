"""Synthetic data with known conditional quantiles, and Monte Carlo checks of
consistency, interval coverage and dynamic-quantile test size."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .data import ReturnSeries
from .errors import ConfigError, EstimationError
from .backtest import build_instruments, dq_in_sample
from .fitting import InstrumentConfig, estimate
from .models import ModelSpec, Regime
from .objective import hit_series
from .optimize import OptimizerConfig, multistart, with_seed

log = logging.getLogger(__name__)

BURN_IN = 500

DGP_KINDS = ("ConstantQuantile", "GARCH11", "SAV-true", "AS-true")

_DEFAULT_PARAMS = {
    "ConstantQuantile": (0.0, 1.0),          # location, scale of normal returns
    "GARCH11": (0.05, 0.10, 0.85),          # omega, alpha, beta
    "SAV-true": (0.2, 0.8, 0.3),            # positive-VaR recursion b1 + b2 v + b3 |y|
    "AS-true": (0.05, 0.88, 0.05, 0.30),    # b1 + b2 v + b3 y+ + b4 y-
}

_MATCHED = {
    "ConstantQuantile": Regime.CONSTANT,
    "GARCH11": Regime.INDIRECT_GARCH,
    "SAV-true": Regime.SAV,
    "AS-true": Regime.AS,
}


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


@dataclass(frozen=True)
class SyntheticDGP:
    """A data-generating process whose conditional theta-quantile is known.

    For the SAV-true and AS-true kinds ``true_params`` describe the
    positive VaR recursion ``v_t``; returns are ``v_t * eps_t / |z_theta|``
    so the return-scale quantile is ``-v_t``.  ``beta0`` gives the matching
    return-scale regime parameters.
    """

    kind: str
    theta: float = 0.05
    T: int = 1000
    seed: int = 0
    true_params: tuple[float, ...] = field(default=())

    def __post_init__(self):
        aliases = {"GARCH11-Gaussian": "GARCH11"}
        kind = aliases.get(self.kind, self.kind)
        if kind not in DGP_KINDS:
            raise ConfigError(f"unknown DGP kind {self.kind!r}; choose from {DGP_KINDS}")
        object.__setattr__(self, "kind", kind)
        params = tuple(float(v) for v in (self.true_params or _DEFAULT_PARAMS[kind]))
        if len(params) != len(_DEFAULT_PARAMS[kind]):
            raise ConfigError(f"{kind} takes {len(_DEFAULT_PARAMS[kind])} parameters")
        object.__setattr__(self, "true_params", params)
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.T < 1:
            raise ConfigError("T must be positive")
        if kind == "GARCH11":
            omega, alpha, beta = params
            if not (omega > 0 and alpha >= 0 and beta >= 0 and alpha + beta < 1):
                raise ConfigError("GARCH(1,1) needs omega > 0, alpha, beta >= 0, alpha + beta < 1")
        if kind == "ConstantQuantile" and not params[1] > 0:
            raise ConfigError("scale must be positive")
        if kind in ("SAV-true", "AS-true"):
            if params[0] <= 0 or any(v < 0 for v in params[1:]) or params[1] >= 1:
                raise ConfigError(f"{kind} needs b1 > 0, 0 <= b2 < 1 and non-negative slopes")

    @property
    def regime(self) -> Regime:
        return _MATCHED[self.kind]

    @property
    def beta0(self) -> np.ndarray:
        z = normal_quantile(self.theta)
        p = self.true_params
        if self.kind == "ConstantQuantile":
            return np.array([p[0] + p[1] * z])
        if self.kind == "GARCH11":
            omega, alpha, beta = p
            return np.array([z * z * omega, beta, z * z * alpha])
        if self.kind == "SAV-true":
            return np.array([-p[0], p[1], -p[2]])
        return np.array([-p[0], p[1], -p[2], -p[3]])

    def replace(self, **changes) -> "SyntheticDGP":
        d = dict(kind=self.kind, theta=self.theta, T=self.T, seed=self.seed,
                 true_params=self.true_params)
        d.update(changes)
        return SyntheticDGP(**d)


def simulate(dgp: SyntheticDGP) -> tuple[ReturnSeries, np.ndarray]:
    """Draw a return series and its true conditional quantile path."""
    rng = np.random.default_rng(dgp.seed)
    z = normal_quantile(dgp.theta)
    T = dgp.T
    p = dgp.true_params
    if dgp.kind == "ConstantQuantile":
        y = p[0] + p[1] * rng.standard_normal(T)
        q = np.full(T, p[0] + p[1] * z)
        return ReturnSeries.from_array(y), q

    n = T + BURN_IN
    eps = rng.standard_normal(n)
    y = np.empty(n)
    q = np.empty(n)
    if dgp.kind == "GARCH11":
        omega, alpha, beta = p
        var = omega / (1.0 - alpha - beta)
        for t in range(n):
            if t > 0:
                var = omega + alpha * y[t - 1] ** 2 + beta * var
            sd = math.sqrt(var)
            y[t] = sd * eps[t]
            q[t] = sd * z
    else:
        scale = 1.0 / abs(z)
        # E|eps| = sqrt(2/pi); E[eps+] = E[eps-] = 1/sqrt(2 pi)
        if dgp.kind == "SAV-true":
            b1, b2, b3 = p
            persistence = b2 + b3 * scale * math.sqrt(2.0 / math.pi)
        else:
            b1, b2, b3, b4 = p
            persistence = b2 + (b3 + b4) * scale / math.sqrt(2.0 * math.pi)
        v = b1 / (1.0 - persistence) if persistence < 1 else b1
        for t in range(n):
            if t > 0:
                yp = y[t - 1]
                if dgp.kind == "SAV-true":
                    v = b1 + b2 * v + b3 * abs(yp)
                else:
                    v = b1 + b2 * v + b3 * max(yp, 0.0) + b4 * max(-yp, 0.0)
            y[t] = v * scale * eps[t]
            q[t] = -v
        if not np.all(np.isfinite(y)):
            raise ConfigError(f"{dgp.kind} parameters produce an explosive series")
    return ReturnSeries.from_array(y[BURN_IN:]), q[BURN_IN:]


# --------------------------------------------------------------------------
# experiments


@dataclass
class MCSummary:
    experiment: str
    dgp_kind: str
    regime: str
    theta: float
    replications: int
    rmse_by_T: dict[int, list[float]] = field(default_factory=dict)
    median_by_T: dict[int, list[float]] = field(default_factory=dict)
    coverage_95: list[float] | None = None
    dq_rejection_rate: float | None = None
    failures: int = 0
    failure_rate: float = 0.0
    valid: bool = True
    true_params: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "dgp_kind": self.dgp_kind,
            "regime": self.regime,
            "theta": self.theta,
            "replications": self.replications,
            "true_params": self.true_params,
            "rmse_by_T": {str(k): v for k, v in self.rmse_by_T.items()},
            "median_by_T": {str(k): v for k, v in self.median_by_T.items()},
            "coverage_95": self.coverage_95,
            "dq_rejection_rate": self.dq_rejection_rate,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
            "valid": self.valid,
        }


MAX_FAILURE_RATE = 0.2
Z_975 = 1.959963984540054


def _check_reps(reps: int) -> None:
    if reps < 1:
        raise ConfigError("at least one replication is required")


def _finish(summary: MCSummary, attempts: int) -> MCSummary:
    summary.failure_rate = summary.failures / attempts if attempts else 0.0
    summary.valid = summary.failure_rate <= MAX_FAILURE_RATE
    if not summary.valid:
        log.warning("%s experiment invalid: %.0f%% of fits failed",
                    summary.experiment, 100 * summary.failure_rate)
    return summary


def _setup(dgp, regime, cfg):
    regime = Regime.parse(regime) if regime is not None else dgp.regime
    return ModelSpec(regime, dgp.theta), cfg or OptimizerConfig()


def consistency_experiment(dgp: SyntheticDGP, sizes: Sequence[int], reps: int,
                           cfg=None, regime=None) -> MCSummary:
    """RMSE of the estimates around the truth at each sample size."""
    _check_reps(reps)
    if not sizes:
        raise ConfigError("consistency experiment needs at least one sample size")
    spec, cfg = _setup(dgp, regime, cfg)
    if spec.regime is not dgp.regime:
        raise ConfigError(f"{dgp.kind} data are estimated with {dgp.regime.value}")
    beta0 = dgp.beta0
    summary = MCSummary("consistency", dgp.kind, spec.regime.value, dgp.theta, reps,
                        true_params=beta0.tolist())
    attempts = 0
    for T in sizes:
        errs = []
        for r in range(reps):
            attempts += 1
            y, _ = simulate(dgp.replace(T=int(T), seed=dgp.seed + r))
            try:
                fit = multistart(spec, y, with_seed(cfg, cfg.seed + r))
            except EstimationError:
                summary.failures += 1
                continue
            if not fit.converged:
                summary.failures += 1
            errs.append(fit.beta_hat - beta0)
        errs = np.array(errs)
        if errs.size:
            summary.rmse_by_T[int(T)] = np.sqrt(np.mean(errs ** 2, axis=0)).tolist()
            summary.median_by_T[int(T)] = (np.median(errs, axis=0) + beta0).tolist()
    return _finish(summary, attempts)


def coverage_experiment(dgp: SyntheticDGP, T: int, reps: int, cfg=None, regime=None,
                        offset_se: float = 0.0) -> MCSummary:
    """Share of 95% normal intervals that cover the truth.

    ``offset_se`` moves the target to truth + offset_se * se, a power check
    that should drive coverage towards zero.
    """
    _check_reps(reps)
    spec, cfg = _setup(dgp, regime, cfg)
    beta0 = dgp.beta0
    summary = MCSummary("coverage", dgp.kind, spec.regime.value, dgp.theta, reps,
                        true_params=beta0.tolist())
    hits = np.zeros(spec.n_params)
    used = 0
    for r in range(reps):
        y, _ = simulate(dgp.replace(T=int(T), seed=dgp.seed + r))
        try:
            res = estimate(spec, y, with_seed(cfg, cfg.seed + r))
        except EstimationError:
            summary.failures += 1
            continue
        if not res.fit.converged:
            summary.failures += 1
        target = beta0 + offset_se * res.cov.se
        hits += np.abs(res.beta_hat - target) <= Z_975 * res.cov.se
        used += 1
    summary.coverage_95 = (hits / used).tolist() if used else None
    return _finish(summary, reps)


def dq_size_experiment(dgp: SyntheticDGP, T: int, reps: int, cfg=None, regime=None,
                       instruments=None, level: float = 0.05) -> MCSummary:
    """Rejection frequency of the in-sample DQ test at ``level``.

    With the matched regime this is the test's size; with a misspecified
    ``regime`` it is its power.
    """
    _check_reps(reps)
    spec, cfg = _setup(dgp, regime, cfg)
    instruments = instruments or InstrumentConfig()
    const, quant = instruments.flags(spec.regime)
    summary = MCSummary("dq_size", dgp.kind, spec.regime.value, dgp.theta, reps,
                        true_params=dgp.beta0.tolist())
    rejections = 0
    used = 0
    for r in range(reps):
        y, _ = simulate(dgp.replace(T=int(T), seed=dgp.seed + r))
        try:
            res = estimate(spec, y, with_seed(cfg, cfg.seed + r))
            f = res.path.f
            X = build_instruments(spec.theta, y.returns, f, instruments.lags, const, quant)
            hits = hit_series(spec.theta, y.returns, f)
            dq = dq_in_sample(hits, X, spec.theta, f, res.path.grad, res.cov, y.returns)
        except EstimationError:
            summary.failures += 1
            continue
        if not res.fit.converged:
            summary.failures += 1
        rejections += dq.p_value < level
        used += 1
    summary.dq_rejection_rate = rejections / used if used else None
    return _finish(summary, reps)
