"""Fit -> covariance -> backtest for a single (regime, theta) job."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backtest import (
    DQResult,
    HitRate,
    build_instruments,
    dq_in_sample,
    dq_out_of_sample,
    hit_rate,
)
from .data import ReturnSeries
from .inference import CovarianceEstimates, estimate_covariance
from .models import ModelSpec, QuantilePath, Regime, eval_path
from .objective import hit_series
from .optimize import FitOutcome, OptimizerConfig, multistart


@dataclass(frozen=True)
class InstrumentConfig:
    lags: int = 4
    constant: bool = True
    quantile: bool | None = None   # None: regime default

    def flags(self, regime: Regime) -> tuple[bool, bool]:
        # a constant model's f_t duplicates the intercept column
        quant = (regime is not Regime.CONSTANT) if self.quantile is None else self.quantile
        return self.constant, quant


@dataclass(frozen=True)
class EstimationResult:
    spec: ModelSpec
    fit: FitOutcome
    path: QuantilePath          # whole series, gradients included
    cov: CovarianceEstimates

    @property
    def beta_hat(self) -> np.ndarray:
        return self.fit.beta_hat


@dataclass(frozen=True)
class DQReport:
    hit_in: HitRate
    hit_out: HitRate | None
    dq_in: DQResult
    dq_out: DQResult | None
    instruments_used: str


def estimate(spec: ModelSpec, y: ReturnSeries, cfg: OptimizerConfig | None = None,
             bandwidth: float | None = None) -> EstimationResult:
    fit = multistart(spec, y, cfg)
    path = eval_path(spec, fit.beta_hat, y)
    cov = estimate_covariance(spec, fit.beta_hat, y, path, bandwidth=bandwidth)
    return EstimationResult(spec, fit, path, cov)


def backtest(res: EstimationResult, y: ReturnSeries,
             instruments: InstrumentConfig | None = None) -> DQReport:
    """In-sample and hold-out tests; hold-out rows reuse the frozen-parameter path."""
    instruments = instruments or InstrumentConfig()
    theta = res.spec.theta
    const, quant = instruments.flags(res.spec.regime)
    n_in = y.split_index
    hits = hit_series(theta, y.returns, res.path.f)
    X_all = build_instruments(theta, y.returns, res.path.f, instruments.lags, const, quant)

    X_in = X_all.before(n_in)
    dq_in = dq_in_sample(hits, X_in, theta, res.path.f, res.path.grad, res.cov, y.returns)
    hit_in = hit_rate(hits[:n_in], theta)

    hit_out = dq_out = None
    if n_in < len(y):
        hit_out = hit_rate(hits[n_in:], theta)
        X_out = X_all.after(n_in)
        dq_out = dq_out_of_sample(hits, X_out, theta)
    return DQReport(hit_in, hit_out, dq_in, dq_out, X_in.describe())
