"""Loading daily price/return series and defining the estimation split."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_dates(dates: tuple[str, ...]) -> None:
    for a, b in zip(dates, dates[1:]):
        if b == a:
            raise DataError(f"duplicate date {b}")
        if b < a:
            raise DataError(f"dates not strictly increasing at {a} -> {b}")


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "prices", _frozen(self.prices))
        if len(self.dates) != len(self.prices):
            raise DataError("dates and prices differ in length")
        if len(self.prices) < 2:
            raise DataError("a price series needs at least 2 observations")
        bad_mask = ~np.isfinite(self.prices) | (self.prices <= 0)
        if bad_mask.any():
            bad = int(np.flatnonzero(bad_mask)[0])
            raise DataError(f"non-positive price {self.prices[bad]} on {self.dates[bad]}")
        _check_dates(self.dates)

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    """Percent log returns with an in-sample / out-of-sample split.

    ``split_index`` is the number of in-sample observations; everything
    after it is the hold-out window used for out-of-sample backtests.
    """

    dates: tuple[str, ...]
    returns: np.ndarray
    split_index: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "returns", _frozen(self.returns))
        n = len(self.returns)
        if len(self.dates) != n:
            raise DataError("dates and returns differ in length")
        if n == 0:
            raise DataError("empty return series")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("return series contains non-finite values")
        if self.split_index == -1:
            object.__setattr__(self, "split_index", n)
        if not 1 <= self.split_index <= n:
            raise DataError(f"split index {self.split_index} outside [1, {n}]")

    def __len__(self) -> int:
        return len(self.returns)

    @property
    def in_sample(self) -> np.ndarray:
        return self.returns[: self.split_index]

    @property
    def out_of_sample(self) -> np.ndarray:
        return self.returns[self.split_index:]

    @classmethod
    def from_array(cls, returns, split_index: int | None = None) -> "ReturnSeries":
        """Wrap a bare array, labelling observations by their position."""
        returns = np.asarray(returns, dtype=float)
        dates = tuple(f"t{i:06d}" for i in range(1, len(returns) + 1))
        return cls(dates, returns, len(returns) if split_index is None else split_index)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for CSV input.

    ``mode`` selects whether ``value_column`` holds prices (converted to
    percent log returns) or already-computed returns.
    """

    date_column: str = "date"
    value_column: str = "price"
    mode: str = "price"

    def __post_init__(self):
        if self.mode not in ("price", "return"):
            raise DataError(f"unknown CSV mode {self.mode!r}; expected 'price' or 'return'")


def _read_rows(path, schema: CsvSchema) -> list[tuple[str, float]]:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        for col in (schema.date_column, schema.value_column):
            if col not in reader.fieldnames:
                raise DataError(f"{path}: column {col!r} not found in header {reader.fieldnames}")
        for lineno, rec in enumerate(reader, start=2):
            raw_date = (rec.get(schema.date_column) or "").strip()
            raw_val = (rec.get(schema.value_column) or "").strip()
            try:
                date.fromisoformat(raw_date)
                value = float(raw_val)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: malformed row {lineno}: {exc}") from exc
            if not math.isfinite(value):
                raise DataError(f"{path}: malformed row {lineno}: non-finite value")
            if schema.mode == "price" and value <= 0:
                raise DataError(f"{path}: non-positive price {value} at row {lineno}")
            rows.append((raw_date, value))
    rows.sort(key=lambda r: r[0])
    return rows


def load_csv(path, schema: CsvSchema | None = None) -> PriceSeries:
    """Read a dated price column; rows may appear in any order."""
    schema = schema or CsvSchema()
    if schema.mode != "price":
        raise DataError("load_csv reads prices; use load_returns_csv for return columns")
    rows = _read_rows(path, schema)
    return PriceSeries(tuple(r[0] for r in rows), [r[1] for r in rows])


def load_returns_csv(path, schema: CsvSchema) -> ReturnSeries:
    rows = _read_rows(path, schema)
    dates = tuple(r[0] for r in rows)
    _check_dates(dates)
    return ReturnSeries(dates, [r[1] for r in rows])


def load_series(path, schema: CsvSchema) -> ReturnSeries:
    """Load either mode and hand back returns."""
    if schema.mode == "price":
        return to_returns(load_csv(path, schema))
    return load_returns_csv(path, schema)


def to_returns(p: PriceSeries) -> ReturnSeries:
    if len(p) < 2:
        raise DataError("series too short for returns")
    # ratio form: exact under power-of-two rescaling, and no cancellation of two large logs
    r = 100.0 * np.log(p.prices[1:] / p.prices[:-1])
    return ReturnSeries(p.dates[1:], r)


def split(r: ReturnSeries, in_sample: int) -> ReturnSeries:
    if not 1 <= in_sample <= len(r):
        raise DataError(f"in-sample count {in_sample} outside [1, {len(r)}]")
    return ReturnSeries(r.dates, r.returns, in_sample)
