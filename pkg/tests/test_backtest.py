import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caviar.backtest import (
    InstrumentMatrix,
    build_instruments,
    dq_in_sample,
    dq_out_of_sample,
    hit_rate,
)
from caviar.errors import ConfigError, EstimationError
from caviar.inference import estimate_covariance
from caviar.models import ModelSpec, eval_path
from caviar.objective import hit_series

THETA = 0.05


def sav_setup(seed=0, T=600, theta=THETA):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(T) * np.sqrt(1 + 0.5 * np.sin(np.arange(T) / 40) ** 2)
    spec = ModelSpec("SAV", theta)
    beta = np.array([-0.1, 0.8, -0.3])
    path = eval_path(spec, beta, y)
    cov = estimate_covariance(spec, beta, y, path)
    return y, path, cov


def test_instrument_shapes(rng):
    y = rng.standard_normal(50)
    f = np.full(50, -1.6)
    X0 = build_instruments(THETA, y, f, lags=0)
    assert X0.X.shape == (50, 2) and X0.names == ("const", "f")
    X4 = build_instruments(THETA, y, f, lags=4)
    assert X4.X.shape == (46, 6)
    assert X4.rows[0] == 4
    with pytest.raises(ConfigError):
        build_instruments(THETA, y, f, lags=50)
    with pytest.raises(ConfigError):
        build_instruments(THETA, y, f, lags=0, constant=False, quantile=False)


def test_lagged_hits_shift_oracle(rng):
    y = rng.standard_normal(80)
    f = rng.normal(-1.0, 0.3, 80)
    X = build_instruments(THETA, y, f, lags=3)
    for t_row, t in enumerate(range(3, 80)):
        for k in range(1, 4):
            naive = (1.0 if y[t - k] < f[t - k] else 0.0) - THETA
            assert X.X[t_row, k] == naive
        assert X.X[t_row, 4] == f[t]


def test_select_helpers(rng):
    X = build_instruments(THETA, rng.standard_normal(20), np.zeros(20), lags=2)
    assert X.before(10).n_rows == 8 and X.after(10).n_rows == 10
    assert "hit_lag2" in X.describe()


def alternating_instrument(T):
    # +1/-1 pattern: sums to zero and is not spanned by the model gradients
    x = np.where(np.arange(T) % 2 == 0, 1.0, -1.0)
    return InstrumentMatrix(x[:, None], np.arange(T), ("alt",))


def test_in_sample_orthogonal_hits_give_zero():
    y, path, cov = sav_setup(theta=0.5)
    X = alternating_instrument(len(y))
    hit = np.full(len(y), 0.5)
    dq = dq_in_sample(hit, X, 0.5, path.f, path.grad, cov, y)
    assert dq.statistic == 0.0 and dq.p_value == 1.0


def test_in_sample_scalar_reduction():
    y, path, cov = sav_setup(seed=3)
    f, G = path.f, path.grad
    X = build_instruments(THETA, y, f, lags=1, constant=False, quantile=False)
    hit = hit_series(THETA, y, f)
    dq = dq_in_sample(hit, X, THETA, f, G, cov, y)

    # hand computation of the 1 x T row M = x' - (T^-1 sum x_t h_t g_t) D^-1 G'
    rows = X.rows
    T = rows.size
    x = X.X[:, 0]
    c = cov.bandwidth_used
    h = np.array([1.0 / (2 * c) if abs(y[t] - f[t]) < c else 0.0 for t in rows])
    cross = sum(x[i] * h[i] * G[t] for i, t in enumerate(rows)) / T
    m = x - G[rows] @ np.linalg.solve(cov.D_hat, cross)
    expected = (x @ hit[rows]) ** 2 / (THETA * (1 - THETA) * (m @ m))
    assert dq.dof == 1
    assert dq.statistic == pytest.approx(expected, rel=1e-9)


def test_in_sample_spanned_instruments_rejected():
    y, path, cov = sav_setup(seed=3)
    # the constant and f_t both lie in the span of the SAV gradient
    X = build_instruments(THETA, y, path.f, lags=0)
    with pytest.raises(EstimationError, match="fewer instruments"):
        dq_in_sample(hit_series(THETA, y, path.f), X, THETA, path.f, path.grad, cov, y)


def test_in_sample_dof_and_p_value():
    y, path, cov = sav_setup(seed=4)
    X = build_instruments(THETA, y, path.f, lags=4)
    dq = dq_in_sample(hit_series(THETA, y, path.f), X, THETA, path.f, path.grad, cov, y)
    assert dq.dof + dq.dropped == X.n_cols
    assert dq.statistic >= 0 and 0 <= dq.p_value <= 1
    assert "theta (1 - theta)" in dq.formula


def test_out_of_sample_examples(rng):
    N = 300
    X = InstrumentMatrix(np.ones((N, 1)), np.arange(N), ("const",))
    hit = np.where(rng.uniform(size=N) < 0.08, 1 - THETA, -THETA)
    dq = dq_out_of_sample(hit, X, THETA)
    assert dq.statistic == pytest.approx(hit.sum() ** 2 / (N * THETA * (1 - THETA)), rel=1e-12)
    assert dq.dof == 1
    balanced = np.where(np.arange(N) % 2 == 0, 0.5, -0.5)
    assert dq_out_of_sample(balanced, X, 0.5).statistic == 0.0


def test_out_of_sample_singular_gram(rng):
    X = InstrumentMatrix(np.ones((20, 2)), np.arange(20), ("a", "b"))
    with pytest.raises(EstimationError, match="singular"):
        dq_out_of_sample(np.zeros(20), X, THETA)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_out_of_sample_column_mix_invariance(seed):
    rng = np.random.default_rng(seed)
    N = 200
    Xm = np.column_stack([np.ones(N), rng.standard_normal(N)])
    hit = np.where(rng.uniform(size=N) < THETA, 1 - THETA, -THETA)
    R = rng.standard_normal((2, 2))
    if abs(np.linalg.det(R)) < 0.1:
        R += 2 * np.eye(2)
    a = dq_out_of_sample(hit, InstrumentMatrix(Xm, np.arange(N), ("c", "x")), THETA)
    b = dq_out_of_sample(hit, InstrumentMatrix(Xm @ R, np.arange(N), ("c", "x")), THETA)
    assert abs(a.statistic - b.statistic) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_statistics_nonnegative(seed, lags):
    y, path, cov = sav_setup(seed=seed, T=400)
    X = build_instruments(THETA, y, path.f, lags=lags)
    hit = hit_series(THETA, y, path.f)
    assert dq_in_sample(hit, X, THETA, path.f, path.grad, cov, y).statistic >= 0
    assert dq_out_of_sample(hit, X, THETA).statistic >= 0


def test_frozen_path_hits_repeat():
    y, path, _ = sav_setup(seed=8)
    spec = ModelSpec("SAV", THETA)
    again = eval_path(spec, [-0.1, 0.8, -0.3], y)
    assert np.array_equal(hit_series(THETA, y, path.f), hit_series(THETA, y, again.f))


def test_hit_rate_examples():
    hits = np.full(100, -THETA)
    hits[:5] = 1 - THETA
    hr = hit_rate(hits, THETA)
    assert hr.rate == 0.05 and hr.n_hits == 5 and hr.n == 100

    none = hit_rate(np.full(10, -THETA), THETA)
    assert none.rate == 0.0 and none.binom_p == pytest.approx(1.0)
    assert 0.95 ** 10 == pytest.approx(0.5987, abs=1e-4)

    every = hit_rate(np.full(50, 1 - THETA), THETA)
    assert every.rate == 1.0 and every.binom_p < 1e-60
    with pytest.raises(ConfigError):
        hit_rate([], THETA)
