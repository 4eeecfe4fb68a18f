"""Conditional autoregressive Value-at-Risk: estimation by regression
quantiles, sandwich standard errors and dynamic quantile backtests."""

__version__ = "0.1.0"

from .backtest import (  # noqa: E402
    DQResult,
    HitRate,
    InstrumentMatrix,
    build_instruments,
    dq_in_sample,
    dq_out_of_sample,
    hit_rate,
)
from .data import CsvSchema, PriceSeries, ReturnSeries, load_csv, load_series, split, to_returns  # noqa: E402
from .errors import CaviarError, ConfigError, DataError, EstimationError, InfeasibleParameters  # noqa: E402
from .fitting import DQReport, EstimationResult, InstrumentConfig, backtest, estimate  # noqa: E402
from .inference import CovarianceEstimates, default_bandwidth, estimate_covariance  # noqa: E402
from .models import (  # noqa: E402
    ModelSpec,
    NewsImpactCurve,
    QuantilePath,
    Regime,
    eval_path,
    news_impact,
    unconditional_quantile_var,
)
from .objective import hit_series, objective, rq_loss  # noqa: E402
from .optimize import FitOutcome, OptimizerConfig, multistart, qn_step, refine  # noqa: E402
