"""Hit-rate and dynamic quantile (DQ) backtests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, EstimationError
from .inference import CovarianceEstimates, density_weights
from .objective import hit_series

MAX_CONDITION = 1e12
# instrument directions keeping less than this share of their variance after
# the estimation correction are treated as spanned by the gradient
SPAN_TOL = 0.05

IN_SAMPLE_FORMULA = (
    "DQ = Hit' X (M M')^+ X' Hit / (theta (1 - theta)), "
    "M = X' - (T^-1 X' H grad) D^-1 grad', H = diag(I(|y - f| < c) / (2c)); "
    "(M M')^+ drops directions with eigenvalue < 0.05 relative to X'X, dof = retained rank"
)
OUT_OF_SAMPLE_FORMULA = "DQ = Hit' X (X' X)^-1 X' Hit / (theta (1 - theta))"


@dataclass(frozen=True)
class InstrumentMatrix:
    """Instruments for the DQ tests.

    ``rows`` holds the period index (into the series the hits came from)
    of each row of ``X``; the first ``lags`` periods lack a full lag history
    and are dropped.
    """

    X: np.ndarray
    rows: np.ndarray
    names: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    def select(self, mask) -> "InstrumentMatrix":
        mask = np.asarray(mask, dtype=bool)
        return InstrumentMatrix(self.X[mask], self.rows[mask], self.names)

    def after(self, start: int) -> "InstrumentMatrix":
        """Rows dated at or after period ``start`` (e.g. the hold-out window)."""
        return self.select(self.rows >= start)

    def before(self, stop: int) -> "InstrumentMatrix":
        return self.select(self.rows < stop)

    def describe(self) -> str:
        return f"[{', '.join(self.names)}] on {self.n_rows} rows"


@dataclass(frozen=True)
class DQResult:
    statistic: float
    dof: int
    p_value: float
    formula: str
    dropped: int = 0  # instrument directions spanned by the gradient


@dataclass(frozen=True)
class HitRate:
    rate: float
    n_hits: int
    n: int
    binom_p: float


def build_instruments(theta: float, y, f, lags: int = 4, constant: bool = True,
                      quantile: bool = True) -> InstrumentMatrix:
    """Columns [1, Hit_{t-1}, ..., Hit_{t-lags}, f_t] for t = lags+1..T."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    T = y.shape[0]
    if lags < 0:
        raise ConfigError("lags must be non-negative")
    if lags >= T:
        raise ConfigError(f"lags ({lags}) must be smaller than the series length ({T})")
    hits = hit_series(theta, y, f)
    rows = np.arange(lags, T)
    cols, names = [], []
    if constant:
        cols.append(np.ones(rows.size))
        names.append("const")
    for k in range(1, lags + 1):
        cols.append(hits[rows - k])
        names.append(f"hit_lag{k}")
    if quantile:
        cols.append(f[rows])
        names.append("f")
    if not cols:
        raise ConfigError("instrument set is empty")
    X = np.column_stack(cols)
    if not np.all(np.isfinite(X)):
        raise EstimationError("instrument matrix has non-finite entries")
    return InstrumentMatrix(X, rows, tuple(names))


def _align(v, X: InstrumentMatrix) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] == X.n_rows:
        return v
    if v.shape[0] <= X.rows[-1]:
        raise ConfigError("series too short for the instrument rows")
    return v[X.rows]


def _gram(Xm: np.ndarray) -> np.ndarray:
    XX = Xm.T @ Xm
    cond = np.linalg.cond(XX)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(f"X'X is singular (condition {cond:.3g}); use fewer instruments")
    return XX


def _chi2(stat: float, dof: int, formula: str, dropped: int = 0) -> DQResult:
    stat = max(float(stat), 0.0)
    return DQResult(stat, dof, float(stats.chi2.sf(stat, dof)), formula, dropped)


def dq_in_sample(hit, X: InstrumentMatrix, theta: float, f, grads,
                 cov: CovarianceEstimates, y, span_tol: float = SPAN_TOL) -> DQResult:
    """In-sample DQ test with the estimation-error correction.

    ``hit``, ``f``, ``grads`` and ``y`` are either full in-sample series or
    already aligned with the rows of ``X``; the density weights use the
    bandwidth stored in ``cov``.  (M M')^-1 is a spectral generalised inverse
    and the degrees of freedom equal its retained rank.
    """
    h = _align(hit, X)
    fr = _align(f, X)
    yr = _align(y, X)
    G = np.asarray(grads, dtype=float)
    G = G if G.shape[0] == X.n_rows else G[X.rows]
    Xm = X.X
    T = Xm.shape[0]
    w = density_weights(yr - fr, cov.bandwidth_used)
    cross = (Xm * w[:, None]).T @ G / T          # q x p
    try:
        Dinv = np.linalg.inv(cov.D_hat)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("density matrix is singular") from exc
    M = Xm.T - cross @ Dinv @ G.T                # q x T

    # Whiten by X'X so eigenvalues measure the share of each instrument
    # direction's variance left after the estimation correction.  Directions
    # below span_tol lie (almost) in the span of the gradient: the first-order
    # conditions pin X'Hit there, so they carry no information and are dropped.
    XX = _gram(Xm)
    L = np.linalg.cholesky(XX)
    Linv = np.linalg.inv(L)
    S = Linv @ (M @ M.T) @ Linv.T
    ev, U = np.linalg.eigh(0.5 * (S + S.T))
    keep = ev > span_tol
    if not keep.any():
        raise EstimationError("M M' is singular in every direction; use fewer instruments")
    z = U.T @ (Linv @ (Xm.T @ h))
    stat = float(np.sum(z[keep] ** 2 / ev[keep])) / (theta * (1.0 - theta))
    return _chi2(stat, int(keep.sum()), IN_SAMPLE_FORMULA, int((~keep).sum()))


def dq_out_of_sample(hit_oos, X_oos: InstrumentMatrix, theta: float) -> DQResult:
    """Hold-out DQ test with the parameters frozen at the in-sample estimate."""
    h = _align(hit_oos, X_oos)
    Xm = X_oos.X
    XX = _gram(Xm)
    xh = Xm.T @ h
    stat = xh @ np.linalg.solve(XX, xh) / (theta * (1.0 - theta))
    return _chi2(stat, X_oos.n_cols, OUT_OF_SAMPLE_FORMULA)


def hit_rate(hit, theta: float) -> HitRate:
    """Exceedance frequency with an exact two-sided binomial test of rate = theta."""
    hit = np.asarray(hit, dtype=float)
    if hit.size == 0:
        raise ConfigError("hit series is empty")
    n_hits = int(np.count_nonzero(hit > 0))
    n = int(hit.size)
    p = float(stats.binomtest(n_hits, n, theta).pvalue)
    return HitRate(n_hits / n, n_hits, n, min(p, 1.0))
