"""Multi-start simplex / quasi-Newton minimisation of the quantile objective.

Uniform random starts on [0, 1]^p (positive-VaR coordinates, mapped onto
the return scale by ``start_signs``) are screened by loss, the best few are
refined by alternating a Nelder-Mead simplex search with a quasi-Newton
polish until the loss stops improving, and the best refined point wins.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, EstimationError
from .models import ModelSpec, start_signs
from .objective import make_objective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 100
    m_keep: int = 10
    rq_tol: float = 1e-10
    max_alternations: int = 20
    # reflection, expansion, contraction, shrink
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    simplex_xtol: float = 1e-10
    simplex_maxiter: int = 1000  # per parameter
    qn_grad_step: float = 1e-7
    qn_maxiter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_starts < 1 or self.m_keep < 1:
            raise ConfigError("n_starts and m_keep must be positive")
        if self.m_keep > self.n_starts:
            raise ConfigError(f"m_keep ({self.m_keep}) exceeds n_starts ({self.n_starts})")
        if not self.rq_tol > 0:
            raise ConfigError("rq_tol must be positive")
        if self.max_alternations < 1:
            raise ConfigError("max_alternations must be at least 1")
        if not (self.reflection > 0 and self.expansion > 1 and 0 < self.contraction < 1
                and 0 < self.shrink < 1):
            raise ConfigError("invalid simplex coefficients")
        if not self.qn_grad_step > 0:
            raise ConfigError("qn_grad_step must be positive")

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "OptimizerConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown optimizer options: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FitOutcome:
    beta_hat: np.ndarray
    loss: float
    alternations_used: int
    converged: bool
    start_rank: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)


# --------------------------------------------------------------------------
# Nelder-Mead


def nelder_mead(fun: Callable, x0, cfg: OptimizerConfig, f0: float | None = None):
    """Minimise ``fun`` from ``x0``; returns (x, fx, n_iter).

    Stops once both the spread of simplex values is below ``cfg.rq_tol`` and
    the vertices lie within ``cfg.simplex_xtol`` of the best one.  Infinite
    values are allowed and simply lose every comparison.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    rho, chi, psi, sigma = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink

    sim = np.empty((n + 1, n))
    sim[0] = x0
    for k in range(n):
        y = x0.copy()
        y[k] = y[k] * 1.05 if y[k] != 0 else 0.00025
        sim[k + 1] = y
    fsim = np.empty(n + 1)
    fsim[0] = fun(x0) if f0 is None else f0
    for k in range(1, n + 1):
        fsim[k] = fun(sim[k])

    maxiter = cfg.simplex_maxiter * n
    it = 0
    while it < maxiter:
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        if (np.max(np.abs(sim[1:] - sim[0])) <= cfg.simplex_xtol
                and np.max(np.abs(fsim[1:] - fsim[0])) <= cfg.rq_tol):
            break
        it += 1
        xbar = sim[:-1].mean(axis=0)
        xr = (1 + rho) * xbar - rho * sim[-1]
        fr = fun(xr)
        if fr < fsim[0]:
            xe = (1 + rho * chi) * xbar - rho * chi * sim[-1]
            fe = fun(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
            continue
        if fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
            continue
        if fr < fsim[-1]:
            xc = (1 + psi * rho) * xbar - psi * rho * sim[-1]
            fc = fun(xc)
            if fc <= fr:
                sim[-1], fsim[-1] = xc, fc
                continue
        else:
            xcc = (1 - psi) * xbar + psi * sim[-1]
            fcc = fun(xcc)
            if fcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fcc
                continue
        for j in range(1, n + 1):
            sim[j] = sim[0] + sigma * (sim[j] - sim[0])
            fsim[j] = fun(sim[j])

    best = int(np.argmin(fsim))
    return sim[best].copy(), float(fsim[best]), it


# --------------------------------------------------------------------------
# quasi-Newton


def qn_step(grad, hessian_approx) -> np.ndarray:
    """Solve B dx = -grad.

    A ``hessian_approx`` that is not symmetric positive definite is replaced
    by the identity (with a logged diagnostic), giving steepest descent.
    """
    g = np.asarray(grad, dtype=float)
    B = np.asarray(hessian_approx, dtype=float)
    try:
        if not np.allclose(B, B.T, rtol=1e-10, atol=1e-14):
            raise np.linalg.LinAlgError("asymmetric")
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        log.warning("quasi-Newton: Hessian approximation not SPD; reset to identity")
        return -g
    z = np.linalg.solve(L, -g)
    return np.linalg.solve(L.T, z)


def secant_update(B, s, y) -> np.ndarray:
    """BFGS update of the Hessian approximation: the least change (in a
    weighted Frobenius norm) to ``B`` that satisfies ``B_new @ s = y``.

    Returns the identity when the curvature condition ``s'y > 0`` fails.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sy = float(s @ y)
    if not sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) or not np.isfinite(sy):
        return np.eye(s.size)
    Bs = B @ s
    sBs = float(s @ Bs)
    Bn = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (Bn + Bn.T)


def fd_gradient(fun: Callable, x, fx: float, h: float) -> np.ndarray:
    """Forward differences with a step relative to |x|."""
    g = np.empty_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += step
        g[i] = (fun(xp) - fx) / step
    return g


def quasi_newton(fun: Callable, x0, f0: float, cfg: OptimizerConfig):
    """Finite-difference quasi-Newton polish with backtracking; never increases the loss."""
    x = np.asarray(x0, dtype=float).copy()
    fx = f0
    n = x.size
    B = np.eye(n)
    g = fd_gradient(fun, x, fx, cfg.qn_grad_step)
    first = True
    for _ in range(cfg.qn_maxiter):
        if not np.all(np.isfinite(g)) or not np.any(g):
            break
        dx = qn_step(g, B)
        slope = float(g @ dx)
        if not slope < 0:
            B = np.eye(n)
            dx = -g
            slope = -float(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-12:
            xn = x + t * dx
            fn = fun(xn)
            if fn < fx and fn <= fx + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        gn = fd_gradient(fun, xn, fn, cfg.qn_grad_step)
        s, yv = xn - x, gn - g
        if first:
            sy = float(s @ yv)
            if sy > 0:
                B = (float(yv @ yv) / sy) * np.eye(n)
            first = False
        B = secant_update(B, s, yv)
        improvement = fx - fn
        x, fx, g = xn, fn, gn
        if improvement < cfg.rq_tol:
            break
    return x, fx


# --------------------------------------------------------------------------
# drivers


def _embed(free_x, p: int, fixed: Mapping[int, float]) -> np.ndarray:
    beta = np.empty(p)
    free_idx = [i for i in range(p) if i not in fixed]
    beta[free_idx] = free_x
    for i, v in fixed.items():
        beta[i] = v
    return beta


def _restricted(spec: ModelSpec, y, fixed: Mapping[int, float] | None):
    p = spec.n_params
    fixed = dict(fixed or {})
    for i in fixed:
        if not 0 <= i < p:
            raise ConfigError(f"fixed parameter index {i} out of range for {spec.regime.value}")
    if len(fixed) >= p:
        raise ConfigError("at least one parameter must be free")
    full = make_objective(spec, y)
    if not fixed:
        return full, p, (lambda x: np.asarray(x, dtype=float).copy())
    n_free = p - len(fixed)
    embed = lambda x: _embed(x, p, fixed)  # noqa: E731
    return (lambda x: full(embed(x))), n_free, embed


def alternate(fun: Callable, x0, cfg: OptimizerConfig):
    """Simplex then quasi-Newton, repeated until an alternation gains less
    than ``rq_tol``; returns (x, loss, alternations, converged, history)."""
    x = np.asarray(x0, dtype=float).copy()
    fx = fun(x)
    history = [fx]
    converged = False
    used = 0
    for used in range(1, cfg.max_alternations + 1):
        x1, f1, _ = nelder_mead(fun, x, cfg, fx)
        if not f1 <= fx:
            x1, f1 = x, fx
        x2, f2 = quasi_newton(fun, x1, f1, cfg)
        improvement = fx - f2
        x, fx = x2, f2
        history.append(fx)
        log.debug("alternation %d: loss %.12g (improvement %.3g)", used, fx, improvement)
        if np.isfinite(fx) and improvement < cfg.rq_tol:
            converged = True
            break
    return x, fx, used, converged, tuple(history)


def refine(spec: ModelSpec, y, beta0, cfg: OptimizerConfig | None = None,
           fixed: Mapping[int, float] | None = None) -> FitOutcome:
    """Alternate simplex and quasi-Newton stages from ``beta0``.

    ``fixed`` maps parameter indices to held values; ``beta0`` then gives
    the starting values of the free parameters only (or the full vector,
    from which the free entries are taken).
    """
    cfg = cfg or OptimizerConfig()
    fun, n_free, embed = _restricted(spec, y, fixed)
    x0 = np.asarray(beta0, dtype=float).ravel()
    if fixed and x0.size == spec.n_params:
        x0 = np.delete(x0, sorted(fixed))
    if x0.size != n_free or not np.all(np.isfinite(x0)):
        raise ConfigError(f"starting vector must hold {n_free} finite values")
    x, fx, used, conv, hist = alternate(fun, x0, cfg)
    return FitOutcome(embed(x), fx, used, conv, 0, hist)


def multistart(spec: ModelSpec, y, cfg: OptimizerConfig | None = None,
               fixed: Mapping[int, float] | None = None) -> FitOutcome:
    """Screen uniform random starts, refine the best ``m_keep``, keep the overall minimum.

    Starts are uniform on [0, 1]^p in positive-VaR coordinates (see
    ``start_signs``), then refined without constraints.

    Ties in loss go to the better-screened start, so the result is a
    deterministic function of the seed, configuration and data.
    """
    cfg = cfg or OptimizerConfig()
    fun, n_free, embed = _restricted(spec, y, fixed)
    rng = np.random.default_rng(cfg.seed)
    signs = start_signs(spec)
    if fixed:
        signs = np.delete(signs, sorted(fixed))
    starts = rng.uniform(0.0, 1.0, size=(cfg.n_starts, n_free)) * signs
    losses = np.array([fun(s) for s in starts])
    finite = np.isfinite(losses)
    if not finite.any():
        raise EstimationError(
            f"all {cfg.n_starts} starting vectors are infeasible for {spec.regime.value}"
        )
    order = np.argsort(np.where(finite, losses, np.inf), kind="stable")
    keep = [i for i in order[: cfg.m_keep] if finite[i]]

    best = None
    for rank, idx in enumerate(keep):
        x, fx, used, conv, hist = alternate(fun, starts[idx], cfg)
        log.debug("start rank %d: loss %.12g after %d alternations", rank, fx, used)
        if best is None or fx < best.loss:
            best = FitOutcome(embed(x), fx, used, conv, rank, hist)
    return best


def with_seed(cfg: OptimizerConfig, seed: int) -> OptimizerConfig:
    return replace(cfg, seed=int(seed))
