"""Load -> split -> fit every (regime, theta) -> inference -> backtest -> files."""
from __future__ import annotations

import csv
import json
from importlib import resources
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .backtest import DQResult, HitRate
from .config import MCConfig, RunConfig
from .data import ReturnSeries, load_series, split
from .errors import CaviarError, ConfigError, DataError, EstimationError
from .fitting import DQReport, EstimationResult, backtest, estimate
from .models import ModelSpec, news_impact, unconditional_quantile_var
from .montecarlo import consistency_experiment, coverage_experiment, dq_size_experiment

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4

SIGN_CONVENTION = (
    "f is the conditional theta-quantile of returns (percent log returns); "
    "var = -f is the positive Value-at-Risk; hit = 1 when return < f"
)


def report_schema() -> dict:
    """The JSON schema that every ``report.json`` validates against."""
    text = resources.files("caviar").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_ESTIMATION


def _num(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _vec(v) -> list:
    return [_num(x) for x in np.asarray(v, dtype=float).ravel()]


def _matrix(m) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return {"rows": m.shape[0], "cols": m.shape[1], "data": _vec(m)}


def _theta_tag(theta: float) -> str:
    return f"{theta:g}"


def _hit_json(h: HitRate | None) -> dict | None:
    if h is None:
        return None
    return {"rate": _num(h.rate), "n_hits": h.n_hits, "n": h.n, "binom_p": _num(h.binom_p)}


def _dq_json(d: DQResult | None) -> dict | None:
    if d is None:
        return None
    return {"statistic": _num(d.statistic), "dof": d.dof, "p_value": _num(d.p_value),
            "dropped_directions": d.dropped, "formula": d.formula}


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


def load_returns(cfg: RunConfig) -> ReturnSeries:
    series = load_series(cfg.input_path, cfg.schema)
    if cfg.in_sample is not None:
        series = split(series, cfg.in_sample)
    return series


def fit_block(cfg: RunConfig, y: ReturnSeries, regime, theta: float, out_dir: Path) -> dict:
    """One (regime, theta) job: estimates, tests and plot files."""
    spec = ModelSpec(regime, theta, adaptive_G=cfg.adaptive_G, init_window=cfg.init_window)
    tag = f"{spec.regime.value}_{_theta_tag(theta)}"
    block: dict[str, Any] = {"regime": spec.regime.value, "theta": theta}
    res: EstimationResult = estimate(spec, y, cfg.optimizer, bandwidth=cfg.bandwidth)
    dq: DQReport = backtest(res, y, cfg.instruments)

    f = res.path.f
    path_file = f"var_path_{tag}.csv"
    n_in = y.split_index
    _write_csv(
        out_dir / path_file,
        ["date", "return", "f", "var", "hit", "sample"],
        (
            (d, _fmt(r), _fmt(q), _fmt(-q), int(r < q), "in" if i < n_in else "out")
            for i, (d, r, q) in enumerate(zip(y.dates, y.returns, f))
        ),
    )

    var_prev = cfg.news_impact.var_prev_for(theta)
    news_file = f"news_impact_{tag}.csv"
    try:
        curve = news_impact(spec, res.beta_hat, var_prev, cfg.news_impact.grid())
        _write_csv(out_dir / news_file, ["x", "value"],
                   ((_fmt(a), _fmt(b)) for a, b in zip(curve.x, curve.var_next)))
        news = {"var_prev": var_prev, "file": news_file}
    except EstimationError as exc:
        news = {"var_prev": var_prev, "file": None, "error": str(exc)}

    cov = res.cov
    block.update({
        "params": _vec(res.beta_hat),
        "loss": _num(res.fit.loss),
        "converged": bool(res.fit.converged),
        "alternations_used": res.fit.alternations_used,
        "start_rank": res.fit.start_rank,
        "initial_quantile": _num(f[0]) if spec.regime.value != "Constant" else None,
        "covariance": {
            "A": _matrix(cov.A_hat),
            "D": _matrix(cov.D_hat),
            "V": _matrix(cov.V_hat),
            "bandwidth": _num(cov.bandwidth_used),
            "n_in_band": cov.n_in_band,
            "n_obs": cov.n_obs,
        },
        "se": _vec(cov.se),
        "t_stats": _vec(cov.t_stats),
        "p_values": _vec(cov.p_values),
        "backtest": {
            "hit_in": _hit_json(dq.hit_in),
            "hit_out": _hit_json(dq.hit_out),
            "dq_in": _dq_json(dq.dq_in),
            "dq_out": _dq_json(dq.dq_out),
            "instruments": dq.instruments_used,
            "dof_rule": "chi-squared dof = number of (retained) instrument directions",
        },
        "news_impact": news,
        "files": {"var_path": path_file},
        "error": None,
    })
    p_dq = dq.dq_out.p_value if dq.dq_out is not None else float("nan")
    print(
        f"{spec.regime.value:>13s} theta={theta:<5g} beta={np.array2string(res.beta_hat, precision=4)} "
        f"hit_in={dq.hit_in.rate:.4f} DQ_in p={dq.dq_in.p_value:.3f} DQ_out p={p_dq:.3f}"
    )
    return block


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute a fit run; returns (exit code, report).  The report is also
    written to ``<output_dir>/report.json`` with the CSV files beside it."""
    y = load_returns(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    report: dict[str, Any] = {
        "schema_version": 1,
        "tool": f"caviar {__version__}",
        "sign_convention": SIGN_CONVENTION,
        "input": {
            "path": str(cfg.input_path),
            "mode": cfg.schema.mode,
            "n_returns": len(y),
            "in_sample": y.split_index,
            "out_of_sample": len(y) - y.split_index,
            "first_date": y.dates[0],
            "last_date": y.dates[-1],
        },
        "settings": {
            "regimes": [r.value for r in cfg.regimes],
            "thetas": list(cfg.thetas),
            "adaptive_G": cfg.adaptive_G,
            "init_window": cfg.init_window,
            "bandwidth_override": cfg.bandwidth,
            "seed": cfg.seed,
            "optimizer": {k: getattr(cfg.optimizer, k) for k in cfg.optimizer.__dataclass_fields__},
            "instruments": {"lags": cfg.instruments.lags, "constant": cfg.instruments.constant,
                            "quantile": cfg.instruments.quantile},
        },
        "fits": [],
        "unconditional": [],
    }

    code = EXIT_OK
    for theta in cfg.thetas:
        for regime in cfg.regimes:
            try:
                block = fit_block(cfg, y, regime, theta, out_dir)
            except EstimationError as exc:
                log.error("%s at theta=%g failed: %s", regime.value, theta, exc)
                block = {"regime": regime.value, "theta": theta, "error": str(exc)}
                code = EXIT_ESTIMATION
            report["fits"].append(block)

        uq = unconditional_quantile_var(y, theta, cfg.unconditional_window)
        uq_file = f"unconditional_{_theta_tag(theta)}.csv"
        dates = y.dates[len(y) - len(uq):]
        _write_csv(out_dir / uq_file, ["date", "value"],
                   ((d, _fmt(v)) for d, v in zip(dates, uq)))
        report["unconditional"].append(
            {"theta": theta, "window": cfg.unconditional_window, "file": uq_file}
        )

    with (out_dir / "report.json").open("w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return code, report


def run_mc(cfg: MCConfig) -> tuple[int, dict]:
    if cfg.experiment == "consistency":
        summary = consistency_experiment(cfg.dgp, cfg.sizes, cfg.reps, cfg.optimizer, cfg.regime)
    elif cfg.experiment == "coverage":
        summary = coverage_experiment(cfg.dgp, cfg.T, cfg.reps, cfg.optimizer, cfg.regime,
                                      offset_se=cfg.offset_se)
    elif cfg.experiment == "dq_size":
        summary = dq_size_experiment(cfg.dgp, cfg.T, cfg.reps, cfg.optimizer, cfg.regime,
                                     cfg.instruments, level=cfg.level)
    else:  # guarded by MCConfig
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    out = summary.to_dict()
    out["seed"] = cfg.seed
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "mc_summary.json").open("w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(json.dumps(out, indent=2))
    return (EXIT_OK if summary.valid else EXIT_ESTIMATION), out


__all__ = ["run", "run_mc", "exit_code_for", "report_schema", "CaviarError"]
