"""JSON run and experiment configuration."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .data import CsvSchema
from .errors import ConfigError, DataError
from .fitting import InstrumentConfig
from .models import DEFAULT_ADAPTIVE_G, INIT_WINDOW, Regime
from .montecarlo import SyntheticDGP, normal_quantile
from .optimize import OptimizerConfig

# previous-period VaR used for the news impact curves at the two standard levels
NEWS_IMPACT_VAR_PREV = {0.01: -2.576, 0.05: -1.960}


def default_var_prev(theta: float) -> float:
    for level, value in NEWS_IMPACT_VAR_PREV.items():
        if math.isclose(theta, level):
            return value
    return round(normal_quantile(theta / 2.0), 3)


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _check_keys(d: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class NewsImpactConfig:
    x_min: float = -10.0
    x_max: float = 10.0
    n_points: int = 201
    var_prev: Mapping[float, float] = field(default_factory=dict)

    def grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def var_prev_for(self, theta: float) -> float:
        for k, v in self.var_prev.items():
            if math.isclose(k, theta):
                return float(v)
        return default_var_prev(theta)


@dataclass(frozen=True)
class RunConfig:
    input_path: Path
    schema: CsvSchema
    regimes: tuple[Regime, ...]
    thetas: tuple[float, ...]
    in_sample: int | None = None
    adaptive_G: float = DEFAULT_ADAPTIVE_G
    init_window: int = INIT_WINDOW
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    instruments: InstrumentConfig = field(default_factory=InstrumentConfig)
    bandwidth: float | None = None
    news_impact: NewsImpactConfig = field(default_factory=NewsImpactConfig)
    unconditional_window: int | str = "expanding"
    output_dir: Path = Path("caviar-out")
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: Path | None = None) -> "RunConfig":
        _check_keys(d, {"input", "in_sample", "regimes", "thetas", "adaptive_G", "init_window",
                        "optimizer", "instruments", "bandwidth", "news_impact",
                        "unconditional_window", "output_dir", "seed"}, "run config")
        inp = d.get("input")
        if not isinstance(inp, Mapping) or "path" not in inp:
            raise ConfigError("config needs an 'input' object with a 'path'")
        _check_keys(inp, {"path", "date_column", "value_column", "mode"}, "input")
        try:
            schema = CsvSchema(inp.get("date_column", "date"), inp.get("value_column", "price"),
                               inp.get("mode", "price"))
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        path = Path(inp["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path

        regimes = d.get("regimes", [r.value for r in (Regime.SAV, Regime.AS,
                                                      Regime.INDIRECT_GARCH, Regime.ADAPTIVE)])
        if not isinstance(regimes, list) or not regimes:
            raise ConfigError("at least one regime is required")
        thetas = d.get("thetas", [0.01, 0.05])
        if not isinstance(thetas, list) or not thetas:
            raise ConfigError("at least one theta is required")
        try:
            thetas = tuple(float(t) for t in thetas)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"thetas must be numbers: {exc}") from exc
        for t in thetas:
            if not 0.0 < t < 1.0:
                raise ConfigError(f"theta {t} outside (0, 1)")

        ni = dict(d.get("news_impact") or {})
        _check_keys(ni, {"x_min", "x_max", "n_points", "var_prev"}, "news_impact")
        var_prev = {float(k): float(v) for k, v in (ni.pop("var_prev", None) or {}).items()}
        news = NewsImpactConfig(var_prev=var_prev, **ni)
        if not news.x_max > news.x_min or news.n_points < 2:
            raise ConfigError("news_impact grid needs x_max > x_min and n_points >= 2")

        ins = dict(d.get("instruments") or {})
        _check_keys(ins, {"lags", "constant", "quantile"}, "instruments")
        instruments = InstrumentConfig(**ins)
        if instruments.lags < 0:
            raise ConfigError("instrument lags must be non-negative")

        seed = int(d.get("seed", 0))
        optimizer = OptimizerConfig.from_dict({"seed": seed, **(d.get("optimizer") or {})})

        window = d.get("unconditional_window", "expanding")
        if window != "expanding":
            if not isinstance(window, int) or window < 1:
                raise ConfigError("unconditional_window must be 'expanding' or a positive integer")

        in_sample = d.get("in_sample")
        if in_sample is not None and (not isinstance(in_sample, int) or in_sample < 1):
            raise ConfigError("in_sample must be a positive integer")
        bandwidth = d.get("bandwidth")
        if bandwidth is not None and not float(bandwidth) > 0:
            raise ConfigError("bandwidth must be positive")
        try:
            cfg = cls(
                input_path=path,
                schema=schema,
                regimes=tuple(Regime.parse(r) for r in regimes),
                thetas=thetas,
                in_sample=in_sample,
                adaptive_G=float(d.get("adaptive_G", DEFAULT_ADAPTIVE_G)),
                init_window=int(d.get("init_window", INIT_WINDOW)),
                optimizer=optimizer,
                instruments=instruments,
                bandwidth=None if bandwidth is None else float(bandwidth),
                news_impact=news,
                unconditional_window=window,
                output_dir=Path(d.get("output_dir", "caviar-out")),
                seed=seed,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if not cfg.adaptive_G > 0:
            raise ConfigError("adaptive_G must be positive")
        return cfg

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "RunConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, output_dir=Path(out))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), optimizer=replace(cfg.optimizer, seed=int(seed)))
        return cfg


EXPERIMENTS = ("consistency", "coverage", "dq_size")


@dataclass(frozen=True)
class MCConfig:
    experiment: str
    dgp: SyntheticDGP
    reps: int
    sizes: tuple[int, ...] = ()
    T: int | None = None
    regime: Regime | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    instruments: InstrumentConfig = field(default_factory=InstrumentConfig)
    offset_se: float = 0.0
    level: float = 0.05
    output_dir: Path = Path("caviar-mc")
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MCConfig":
        _check_keys(d, {"experiment", "dgp", "reps", "sizes", "T", "regime", "optimizer",
                        "instruments", "offset_se", "level", "output_dir", "seed"}, "mc config")
        exp = d.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")
        seed = int(d.get("seed", 0))
        dgp_d = dict(d.get("dgp") or {})
        _check_keys(dgp_d, {"kind", "theta", "true_params", "seed", "T"}, "dgp")
        if "kind" not in dgp_d:
            raise ConfigError("dgp needs a 'kind'")
        dgp_d.setdefault("seed", seed)
        dgp_d["true_params"] = tuple(dgp_d.get("true_params") or ())
        dgp = SyntheticDGP(**dgp_d)
        reps = d.get("reps")
        if not isinstance(reps, int) or reps < 1:
            raise ConfigError("reps must be a positive integer")
        sizes = tuple(int(s) for s in d.get("sizes", ()))
        T = d.get("T")
        if exp == "consistency" and not sizes:
            raise ConfigError("consistency experiment needs 'sizes'")
        if exp != "consistency" and not (isinstance(T, int) and T > 0):
            raise ConfigError(f"{exp} experiment needs a positive integer 'T'")
        ins = dict(d.get("instruments") or {})
        _check_keys(ins, {"lags", "constant", "quantile"}, "instruments")
        regime = d.get("regime")
        return cls(
            experiment=exp,
            dgp=dgp,
            reps=reps,
            sizes=sizes,
            T=T,
            regime=None if regime is None else Regime.parse(regime),
            optimizer=OptimizerConfig.from_dict({"seed": seed, **(d.get("optimizer") or {})}),
            instruments=InstrumentConfig(**ins),
            offset_se=float(d.get("offset_se", 0.0)),
            level=float(d.get("level", 0.05)),
            output_dir=Path(d.get("output_dir", "caviar-mc")),
            seed=seed,
        )

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "MCConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, output_dir=Path(out))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), dgp=cfg.dgp.replace(seed=int(seed)),
                          optimizer=replace(cfg.optimizer, seed=int(seed)))
        return cfg
