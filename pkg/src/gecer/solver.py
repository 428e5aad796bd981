"""Coordinate-descent fitting of sparse composite expectile regression.

One outer iteration updates, in order, the G main effects ``beta``, the
interaction factors (``gamma`` or free ``eta``), the E effects ``alpha`` and
the per-level intercepts, maintaining the (L, n) residual matrix
incrementally.  Every block step is a descent step on the true penalized
objective, so the objective trace is non-increasing.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConditioningError, ConfigError, DimensionError, RankDeficiencyError
from .model_core import (
    HIERARCHICAL,
    NON_HIERARCHICAL,
    CoefficientSet,
    ExpectileGrid,
    FitResult,
    PenaltyConfig,
    composite_objective,
    degrees_of_freedom,
    level_weights,
    penalty_value,
    residual_matrix,
)

logger = logging.getLogger(__name__)

SINGLE_LEVEL = "single-level"
MODES = (HIERARCHICAL, NON_HIERARCHICAL, SINGLE_LEVEL)
_MODE_ALIASES = {"cer": HIERARCHICAL, "cer-nonhier": NON_HIERARCHICAL, "er": SINGLE_LEVEL}


@dataclass(frozen=True)
class SolverOptions:
    """Iteration limits and tolerances.

    ``nonconvex`` controls coordinate subproblems whose curvature ``psi`` is
    at most ``1/r``: ``"exact"`` takes the global minimizer of the scalar
    problem, ``"raise"`` raises :class:`ConditioningError`.
    ``freeze_interactions`` keeps gamma / eta at zero.
    """

    max_outer_iterations: int = 1000
    rel_tolerance: float = 1e-4
    intercept_tolerance: float = 1e-10
    nonconvex: str = "exact"
    freeze_interactions: bool = False

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be at least 1")
        if not (self.rel_tolerance > 0 and self.intercept_tolerance > 0):
            raise ConfigError("tolerances must be positive")
        if self.nonconvex not in ("exact", "raise"):
            raise ConfigError(f"nonconvex must be 'exact' or 'raise', got {self.nonconvex!r}")


def normalize_mode(mode):
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES + tuple(_MODE_ALIASES)}")
    return mode


class ResidualState:
    """Per-level residuals ``res_l = y - b_l - Z alpha - X beta - sum_k M^(k) eta_k``."""

    def __init__(self, data, coefficients):
        self.R = np.ascontiguousarray(residual_matrix(data, coefficients))

    def recompute_error(self, data, coefficients):
        return float(np.max(np.abs(self.R - residual_matrix(data, coefficients)), initial=0.0))


def mcp_coordinate_update(phi, psi, lam, r):
    """Closed-form minimizer of ``0.5 psi b^2 - phi b + rho(|b|; lam, r)``.

    Soft-thresholds ``phi`` at ``lam`` and divides by ``psi - 1/r`` when
    ``|phi| <= lam r psi``; returns ``phi / psi`` otherwise.  Requires
    ``psi > 1/r``.
    """
    if not r > 1:
        raise ConfigError(f"MCP regularization r must exceed 1, got {r}")
    if lam < 0:
        raise ConfigError("penalty level must be nonnegative")
    if not psi > 1.0 / r:
        raise ConditioningError(
            f"coordinate curvature psi={psi:.6g} does not exceed 1/r={1.0 / r:.6g}", psi=psi)
    return float(_kernels.mcp_closed_form(float(phi), float(psi), float(lam), float(r)))


def mcp_scalar_minimizer(phi, psi, lam, r):
    """Global minimizer of the same scalar problem for any ``psi > 0``."""
    if not psi > 0:
        raise ConditioningError(f"coordinate curvature psi={psi:.6g} is not positive", psi=psi)
    return float(_kernels.mcp_closed_form(float(phi), float(psi), float(lam), float(r)))


def _raise_nonconvex(block, index, psi, r):
    raise ConditioningError(
        f"{block} coordinate {index}: curvature psi={psi:.6g} <= 1/r={1.0 / r:.6g}",
        index=index, psi=psi)


def update_beta_block(data, state, coefficients, grid, penalty, options=SolverOptions()):
    """Sweep j = 1..p over the G main effects (in place on ``coefficients``/``state``)."""
    taus = grid.as_array()
    p = data.p
    if p == 0:
        return coefficients.beta
    if coefficients.gamma is not None and data.q:
        mult = 1.0 + data.z @ coefficients.gamma
    else:
        mult = np.ones((data.n, p))
    status, j, psi = _kernels.sweep_columns(
        data.x, mult, np.ones(p), coefficients.beta, np.ones(p, dtype=np.bool_), state.R,
        taus, penalty.lambda1, penalty.r, 1.0 / data.n, options.nonconvex == "raise")
    if status != _kernels.OK:
        _raise_nonconvex("beta", j, psi, penalty.r)
    return coefficients.beta


def update_gamma_block(data, state, coefficients, grid, penalty, options=SolverOptions()):
    """Sweep k = 1..q, then j over the interaction factors.

    Hierarchical mode only touches ``gamma[k, j]`` with ``beta[j] != 0``; the
    rest are held at zero.  Non-hierarchical mode updates every ``eta[k, j]``.
    """
    taus = grid.as_array()
    q, p = data.q, data.p
    if q == 0 or p == 0 or options.freeze_interactions:
        return coefficients.interaction_block()
    strict = options.nonconvex == "raise"
    inv_n = 1.0 / data.n
    if coefficients.gamma is not None:
        gamma = coefficients.gamma
        active = coefficients.beta != 0.0
        gamma[:, ~active] = 0.0
        if not active.any():
            return gamma
        scale = coefficients.beta.copy()
        block = gamma
    else:
        active = np.ones(p, dtype=np.bool_)
        scale = np.ones(p)
        block = coefficients.eta
    for k in range(q):
        zk = np.broadcast_to(data.z[:, k, None], (data.n, p))
        row = np.ascontiguousarray(block[k])
        status, j, psi = _kernels.sweep_columns(
            data.x, zk, scale, row, active, state.R, taus,
            penalty.lambda2, penalty.r, inv_n, strict)
        block[k] = row
        if status != _kernels.OK:
            _raise_nonconvex("interaction", (k, j), psi, penalty.r)
    return block


def _alpha_normal_equations(z, W, Yhat):
    A = z.T @ (z * W.sum(axis=0)[:, None])
    rhs = z.T @ (W * Yhat).sum(axis=0)
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise RankDeficiencyError(
            "weighted E-factor system sum_l Z' W_l Z is singular; "
            "check the E-factor design Z for constant or collinear columns")
    return np.linalg.solve(A, rhs)


def update_alpha(data, state, coefficients, grid, max_refresh=50):
    """Weighted least-squares update of the E effects.

    Solves ``(sum_l Z' W_l Z) alpha = sum_l Z' W_l Yhat_l`` with
    ``Yhat_l = res_l + Z alpha_old`` and weights from the current residual
    signs.  With ``max_refresh > 1`` the weights are refreshed and the solve
    repeated until the sign pattern settles; steps that would increase the
    loss are halved back toward the previous value.
    """
    if data.q == 0:
        return coefficients.alpha
    taus = grid.as_array()
    z = data.z
    alpha = coefficients.alpha.copy()
    Yhat = state.R + (z @ alpha)[None, :]
    R = state.R
    W = level_weights(R, taus)
    loss = float(np.sum(W * R * R))
    for it in range(max_refresh):
        target = _alpha_normal_equations(z, W, Yhat)
        if it == 0 and max_refresh == 1:
            alpha = target
            R = Yhat - (z @ alpha)[None, :]
            break
        step = target - alpha
        t = 1.0
        while True:
            trial = alpha + t * step
            R_trial = Yhat - (z @ trial)[None, :]
            W_trial = level_weights(R_trial, taus)
            loss_trial = float(np.sum(W_trial * R_trial * R_trial))
            if loss_trial <= loss or t < 1e-10:
                break
            t *= 0.5
        if loss_trial > loss:
            break
        same = np.array_equal(W_trial, W)
        alpha, R, W, loss = trial, R_trial, W_trial, loss_trial
        if same and t == 1.0:
            break
    coefficients.alpha[:] = alpha
    state.R[:] = R
    return coefficients.alpha


def scalar_expectile(values, tau, tol=1e-10, max_iter=500):
    """Sample tau-expectile: the minimizer of ``sum_i L_tau(v_i - b)``.

    Fixed-point iteration ``b <- sum w_i v_i / sum w_i`` from the mean, with
    a bisection fallback on the (monotone) derivative if it fails to settle.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("scalar_expectile needs at least one value")
    if not (0 < tau < 1):
        raise ConfigError(f"expectile level must lie in (0, 1), got {tau}")
    b = float(np.mean(v))
    if tau == 0.5:
        return b
    for _ in range(max_iter):
        w = np.where(v >= b, tau, 1.0 - tau)
        b_new = float(np.dot(w, v) / np.sum(w))
        if abs(b_new - b) <= tol:
            return b_new
        b = b_new

    def grad(c):
        return -np.dot(np.where(v >= c, tau, 1.0 - tau), v - c)

    lo, hi = float(v.min()), float(v.max())
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if grad(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def update_intercepts(data, state, coefficients, grid, tol=1e-10):
    """Set each ``b_l`` to the tau_l-expectile of its partial residuals."""
    for l, tau in enumerate(grid.levels):
        old = coefficients.intercepts[l]
        new = scalar_expectile(state.R[l] + old, tau, tol)
        coefficients.intercepts[l] = new
        state.R[l] += old - new
    return coefficients.intercepts


def initial_alpha(data):
    """Least-squares regression of y on Z (minimum-norm if Z is rank deficient)."""
    if data.q == 0:
        return np.zeros(0)
    sol, *_ = np.linalg.lstsq(data.z, data.y, rcond=None)
    return sol


def fit(data, grid, penalty, options=SolverOptions(), mode=HIERARCHICAL, init=None):
    """Fit sparse composite expectile regression by block coordinate descent.

    Parameters
    ----------
    data : Dataset
    grid : ExpectileGrid
        Expectile levels; ``mode="single-level"`` requires exactly one.
    penalty : PenaltyConfig
    options : SolverOptions
    mode : {"hierarchical", "non-hierarchical", "single-level"}
        Aliases ``"cer"``, ``"cer-nonhier"`` and ``"er"`` are accepted.
    init : CoefficientSet, optional
        Starting point; defaults to zero slopes and intercepts with alpha
        from least squares of y on Z.

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged=False``.
    """
    mode = normalize_mode(mode)
    if mode == SINGLE_LEVEL and grid.L != 1:
        raise ConfigError(f"single-level mode needs exactly one expectile level, got {grid.L}")
    store = NON_HIERARCHICAL if mode == NON_HIERARCHICAL else HIERARCHICAL
    if init is None:
        coef = CoefficientSet.zeros(grid.L, data.q, data.p, store)
        coef.alpha[:] = initial_alpha(data)
    else:
        if init.mode != store:
            raise DimensionError(f"initial coefficients are {init.mode}, fit mode is {store}")
        coef = init.copy()
    state = ResidualState(data, coef)

    q_prev = composite_objective(data, coef, grid, penalty)
    trace = [q_prev]
    converged = False
    iterations = 0
    for t in range(1, options.max_outer_iterations + 1):
        update_beta_block(data, state, coef, grid, penalty, options)
        update_gamma_block(data, state, coef, grid, penalty, options)
        update_alpha(data, state, coef, grid)
        update_intercepts(data, state, coef, grid, options.intercept_tolerance)
        q_cur = _objective_from_state(state, coef, grid, penalty, data.n)
        trace.append(q_cur)
        iterations = t
        if q_prev == 0.0:
            done = q_cur == 0.0
        else:
            done = abs(q_cur - q_prev) / abs(q_prev) < options.rel_tolerance
        q_prev = q_cur
        if done:
            converged = True
            break
    if not converged:
        logger.info("coordinate descent stopped after %d iterations without converging", iterations)
    return FitResult(
        coefficients=coef,
        objective_trace=np.asarray(trace),
        converged=converged,
        iterations=iterations,
        df=degrees_of_freedom(coef),
        penalty=penalty,
        grid=grid,
        residuals=state.R,
    )


def _objective_from_state(state, coef, grid, penalty, n):
    W = level_weights(state.R, grid.levels)
    return float(np.sum(W * state.R * state.R)) / (2.0 * n) + penalty_value(coef, penalty)


def fit_er(data, tau, penalty, options=SolverOptions()):
    """Single-level (hierarchical) expectile regression at level ``tau``."""
    return fit(data, ExpectileGrid.single(tau), penalty, options, SINGLE_LEVEL)


def fit_cer(data, L, penalty, options=SolverOptions(), hierarchical=True):
    """Composite fit over ``L`` equally spaced levels."""
    mode = HIERARCHICAL if hierarchical else NON_HIERARCHICAL
    return fit(data, ExpectileGrid.equally_spaced(L), penalty, options, mode)
