import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from caviar.data import ReturnSeries
from caviar.errors import ConfigError, EstimationError
from caviar.models import ModelSpec
from caviar.montecarlo import SyntheticDGP, simulate
from caviar.objective import objective
from caviar.optimize import (
    OptimizerConfig,
    alternate,
    multistart,
    nelder_mead,
    qn_step,
    refine,
    secant_update,
)

CFG = OptimizerConfig()


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(n_starts=5, m_keep=10)
    with pytest.raises(ConfigError):
        OptimizerConfig(rq_tol=0.0)
    with pytest.raises(ConfigError):
        OptimizerConfig.from_dict({"n_start": 3})
    assert OptimizerConfig.from_dict({"n_starts": 20}).n_starts == 20


# -- quasi-Newton pieces


def test_qn_step_identity_and_scaled(rng):
    g = rng.standard_normal(4)
    np.testing.assert_allclose(qn_step(g, np.eye(4)), -g)
    np.testing.assert_allclose(qn_step(g, 2 * np.eye(4)), -g / 2)


def test_qn_step_indefinite_resets(caplog):
    g = np.array([1.0, -2.0])
    with caplog.at_level(logging.WARNING, logger="caviar.optimize"):
        step = qn_step(g, np.array([[1.0, 0.0], [0.0, -1.0]]))
    np.testing.assert_allclose(step, -g)
    assert "identity" in caplog.text


def test_secant_curvature_failure_resets():
    B = np.diag([2.0, 3.0])
    np.testing.assert_array_equal(secant_update(B, np.array([1.0, 0.0]), np.array([-1.0, 0.0])),
                                  np.eye(2))


def test_secant_updates_learn_quadratic(rng):
    n = 4
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    x = rng.standard_normal(n)
    B = np.eye(n)
    visited = []
    for _ in range(n):
        g = A @ x
        d = qn_step(g, B)
        alpha = -(g @ d) / (d @ A @ d)  # exact line search
        s = alpha * d
        x = x + s
        B = secant_update(B, s, A @ s)
        visited.append(s)
        for sj in visited:  # hereditary secant property
            np.testing.assert_allclose(B @ sj, A @ sj, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(B, A, rtol=1e-8)
    assert np.linalg.norm(x) < 1e-8
    assert np.linalg.norm(qn_step(A @ x, B) + x) < 1e-12


# -- alternation on smooth problems


def test_quadratic_from_far():
    c = np.array([1.5, -2.0, 0.3])
    x, fx, used, conv, hist = alternate(lambda v: float(np.sum((v - c) ** 2)), np.full(3, 10.0), CFG)
    np.testing.assert_allclose(x, c, atol=1e-8)
    assert conv and all(a >= b for a, b in zip(hist, hist[1:]))


def test_quadratic_from_optimum():
    c = np.array([0.25, 0.5])
    x, fx, used, conv, _ = alternate(lambda v: float(np.sum((v - c) ** 2)), c.copy(), CFG)
    assert used == 1 and conv
    np.testing.assert_array_equal(x, c)


def test_nelder_mead_handles_inf():
    fun = lambda v: np.inf if v[0] < 0 else float((v[0] - 1) ** 2 + v[1] ** 2)  # noqa: E731
    x, fx, _ = nelder_mead(fun, np.array([0.1, 0.5]), CFG)
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-5)


# -- pinball objectives


def sample_quantile_bounds(y, theta):
    s = np.sort(y)
    T = len(y)
    lo = int(np.floor(theta * T))
    hi = int(np.ceil(theta * T)) + 1
    return s[max(lo, 1) - 1], s[min(hi, T) - 1]


def test_constant_model_recovers_quantile(rng):
    for theta in (0.01, 0.05, 0.5):
        y = rng.standard_normal(500)
        fit = multistart(ModelSpec("Constant", theta), y, OptimizerConfig(n_starts=20, m_keep=3))
        lo, hi = sample_quantile_bounds(y, theta)
        assert lo <= fit.beta_hat[0] <= hi


def test_refine_constant_model_flat_segment(rng):
    y = rng.standard_normal(501)
    fit = refine(ModelSpec("Constant", 0.5), y, [2.0])
    lo, hi = sample_quantile_bounds(y, 0.5)
    assert lo <= fit.beta_hat[0] <= hi


def test_loss_field_matches_objective(rng):
    y = simulate(SyntheticDGP("GARCH11", T=800, seed=3))[0]
    spec = ModelSpec("SAV", 0.05)
    fit = multistart(spec, y, OptimizerConfig(n_starts=20, m_keep=2))
    assert abs(fit.loss - objective(spec, fit.beta_hat, y)) <= 1e-12
    assert all(a >= b for a, b in zip(fit.history, fit.history[1:]))


def test_sav_fit_dominates_truth():
    dgp = SyntheticDGP("SAV-true", theta=0.05, T=2500, seed=11, true_params=(0.2, 0.8, 0.3))
    y, _ = simulate(dgp)
    spec = ModelSpec("SAV", 0.05)
    fit = multistart(spec, y)
    assert fit.loss <= objective(spec, dgp.beta0, y)


def test_multistart_dominates_each_kept_start(rng):
    y = simulate(SyntheticDGP("GARCH11", T=600, seed=5))[0]
    spec = ModelSpec("SAV", 0.05)
    cfg = OptimizerConfig(n_starts=12, m_keep=3, seed=4)
    fit = multistart(spec, y, cfg)
    starts = np.random.default_rng(4).uniform(0, 1, size=(12, 3)) * np.array([-1, 1, -1])
    losses = [objective(spec, s, y) for s in starts]
    kept = np.argsort(losses, kind="stable")[:3]
    refined = [refine(spec, y, starts[i], cfg).loss for i in kept]
    assert fit.loss == min(refined)
    assert fit.start_rank == int(np.argmin(refined))


def test_deterministic(rng):
    y = simulate(SyntheticDGP("GARCH11", T=600, seed=9))[0]
    spec = ModelSpec("AS", 0.05)
    cfg = OptimizerConfig(n_starts=20, m_keep=3, seed=2)
    a, b = multistart(spec, y, cfg), multistart(spec, y, cfg)
    assert a.beta_hat.tobytes() == b.beta_hat.tobytes()
    assert (a.loss, a.start_rank, a.alternations_used, a.history) == \
        (b.loss, b.start_rank, b.alternations_used, b.history)


def test_all_starts_infeasible():
    y = ReturnSeries.from_array(np.zeros(50))
    spec = ModelSpec("IndirectGARCH", 0.05)
    # a negative intercept makes every start infeasible at the first step
    with pytest.raises(EstimationError, match="infeasible"):
        multistart(spec, y, OptimizerConfig(n_starts=5, m_keep=2), fixed={0: -1.0})


def test_fixed_index_validation(rng):
    y = rng.standard_normal(100)
    with pytest.raises(ConfigError):
        multistart(ModelSpec("SAV", 0.05), y, fixed={3: 0.0})
    with pytest.raises(ConfigError):
        multistart(ModelSpec("Constant", 0.05), y, fixed={0: 0.0})


# -- restricted SAV against exact and grid oracles


def restricted_sav_lp(y, theta, b2, f1):
    """With beta_2 fixed the SAV path is linear in (beta_1, beta_3), so the
    pinball problem is a linear program."""
    T = len(y)
    a = np.zeros(T)      # d f_t / d beta_1
    c = np.zeros(T)      # d f_t / d beta_3
    base = np.zeros(T)   # contribution of f_1
    base[0] = f1
    for t in range(1, T):
        a[t] = 1 + b2 * a[t - 1]
        c[t] = abs(y[t - 1]) + b2 * c[t - 1]
        base[t] = b2 * base[t - 1]
    a[0] = c[0] = 0.0
    # variables: b1, b3 (free), u+ (T), u- (T) with y - f = u+ - u-
    n = 2 + 2 * T
    cost = np.concatenate([[0.0, 0.0], np.full(T, theta / T), np.full(T, (1 - theta) / T)])
    A_eq = np.zeros((T, n))
    A_eq[:, 0] = a
    A_eq[:, 1] = c
    A_eq[:, 2:2 + T] = np.eye(T)
    A_eq[:, 2 + T:] = -np.eye(T)
    bounds = [(None, None)] * 2 + [(0, None)] * (2 * T)
    res = linprog(cost, A_eq=A_eq, b_eq=y - base, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun, res.x[:2]


def test_restricted_sav_matches_lp():
    y, _ = simulate(SyntheticDGP("GARCH11", T=400, seed=21))
    spec = ModelSpec("SAV", 0.05)
    fit = multistart(spec, y, fixed={1: 0.8})
    f1 = np.sort(y.returns[:300])[14]
    lp_loss, _ = restricted_sav_lp(y.returns, 0.05, 0.8, f1)
    assert fit.beta_hat[1] == 0.8
    assert fit.loss == pytest.approx(lp_loss, abs=1e-6)
