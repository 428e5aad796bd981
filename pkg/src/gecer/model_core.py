"""Data model, asymmetric squared loss, MCP penalty and the composite objective.

Notation used throughout the package:

* ``y`` (n,) response, ``z`` (n, q) environmental (E) factors,
  ``x`` (n, p) genetic (G) factors.
* The k-th interaction design is ``z[:, k, None] * x``; it is never stored.
* Coefficients share slopes across expectile levels and carry one
  intercept per level.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InputDomainError

HIERARCHICAL = "hierarchical"
NON_HIERARCHICAL = "non-hierarchical"


@dataclass(frozen=True)
class Dataset:
    """Response, E-factor matrix and G-factor matrix for ``n`` subjects."""

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    z_names: Optional[tuple] = None
    x_names: Optional[tuple] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = y.shape[0]
        z = np.asarray(self.z, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if z.size == 0:
            z = z.reshape(n, 0)
        if x.size == 0:
            x = x.reshape(n, 0)
        if n < 1:
            raise DimensionError("dataset needs at least one subject")
        if z.ndim != 2 or x.ndim != 2:
            raise DimensionError("z and x must be two-dimensional")
        if z.shape[0] != n or x.shape[0] != n:
            raise DimensionError(
                f"row counts differ: y has {n}, z has {z.shape[0]}, x has {x.shape[0]}")
        for name, arr in (("y", y), ("z", z), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise InputDomainError(f"{name} contains non-finite entries")
        for arr in (y, z, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", np.ascontiguousarray(z))
        object.__setattr__(self, "x", np.ascontiguousarray(x))
        z_names = tuple(self.z_names) if self.z_names is not None else tuple(
            f"e{k + 1}" for k in range(z.shape[1]))
        x_names = tuple(self.x_names) if self.x_names is not None else tuple(
            f"g{j + 1}" for j in range(x.shape[1]))
        if len(z_names) != z.shape[1] or len(x_names) != x.shape[1]:
            raise DimensionError("column name count does not match the design")
        object.__setattr__(self, "z_names", z_names)
        object.__setattr__(self, "x_names", x_names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def q(self):
        return self.z.shape[1]

    @property
    def p(self):
        return self.x.shape[1]

    def interaction(self, k):
        """Interaction design for E-factor ``k``: column j is ``z[:, k] * x[:, j]``."""
        return self.z[:, k, None] * self.x

    def subset(self, rows=None, g_columns=None):
        rows = slice(None) if rows is None else rows
        x = self.x[rows]
        x_names = self.x_names
        if g_columns is not None:
            g_columns = list(g_columns)
            x = x[:, g_columns]
            x_names = tuple(self.x_names[j] for j in g_columns)
        return Dataset(self.y[rows], self.z[rows], x, self.z_names, x_names)


@dataclass(frozen=True)
class ExpectileGrid:
    """Strictly increasing expectile levels in (0, 1)."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(float(t) for t in np.atleast_1d(self.levels))
        if not levels:
            raise ConfigError("expectile grid is empty")
        if any(not (0.0 < t < 1.0) for t in levels):
            raise ConfigError(f"expectile levels must lie in (0, 1): {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"expectile levels must be strictly increasing: {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def equally_spaced(cls, L):
        if int(L) != L or L < 1:
            raise ConfigError(f"number of levels must be a positive integer, got {L}")
        L = int(L)
        return cls(tuple(l / (L + 1) for l in range(1, L + 1)))

    @classmethod
    def single(cls, tau):
        return cls((tau,))

    @property
    def L(self):
        return len(self.levels)

    def as_array(self):
        return np.array(self.levels)


@dataclass(frozen=True)
class PenaltyConfig:
    lambda1: float
    lambda2: float
    r: float = 3.0

    def __post_init__(self):
        if not self.r > 1:
            raise ConfigError(f"MCP regularization r must exceed 1, got {self.r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("penalty levels must be nonnegative")


@dataclass
class CoefficientSet:
    """Per-level intercepts plus shared slopes.

    Exactly one of ``gamma`` (hierarchical, interaction = beta * gamma) or
    ``eta`` (free interaction coefficients) is populated; both are (q, p).
    """

    intercepts: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.intercepts = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if (self.gamma is None) == (self.eta is None):
            raise DimensionError("exactly one of gamma / eta must be given")
        inter = self.gamma if self.gamma is not None else self.eta
        inter = np.asarray(inter, dtype=float).reshape(self.alpha.size, self.beta.size)
        if self.gamma is not None:
            self.gamma = inter
        else:
            self.eta = inter

    @property
    def mode(self):
        return HIERARCHICAL if self.gamma is not None else NON_HIERARCHICAL

    @classmethod
    def zeros(cls, L, q, p, mode=HIERARCHICAL):
        inter = np.zeros((q, p))
        if mode == HIERARCHICAL:
            return cls(np.zeros(L), np.zeros(q), np.zeros(p), gamma=inter)
        return cls(np.zeros(L), np.zeros(q), np.zeros(p), eta=inter)

    def copy(self):
        return CoefficientSet(
            self.intercepts.copy(), self.alpha.copy(), self.beta.copy(),
            gamma=None if self.gamma is None else self.gamma.copy(),
            eta=None if self.eta is None else self.eta.copy())

    def interaction_block(self):
        return self.gamma if self.gamma is not None else self.eta


@dataclass
class FitResult:
    coefficients: CoefficientSet
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    df: int
    penalty: PenaltyConfig
    grid: ExpectileGrid
    residuals: Optional[np.ndarray] = field(default=None, repr=False)


def _check_finite(value, what="residual"):
    if not np.all(np.isfinite(value)):
        raise InputDomainError(f"non-finite {what}")


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0) | ~(tau < 1)):
        raise InputDomainError(f"expectile level must lie in (0, 1), got {tau}")


def expectile_loss(residual, tau):
    """Asymmetric squared loss ``tau * u**2`` for ``u >= 0``, ``(1 - tau) * u**2`` otherwise.

    ``residual`` is ``y - f``; works elementwise on arrays.
    """
    _check_tau(tau)
    u = np.asarray(residual, dtype=float)
    _check_finite(u)
    out = np.where(u >= 0, tau, 1.0 - tau) * u * u
    return float(out) if out.ndim == 0 else out


def build_weights(residuals, tau):
    """Per-subject weights ``tau`` (residual >= 0) or ``1 - tau`` (residual < 0)."""
    _check_tau(tau)
    u = np.asarray(residuals, dtype=float)
    _check_finite(u)
    return np.where(u >= 0, tau, 1.0 - tau)


def level_weights(R, taus):
    """Weights for a (L, n) residual matrix; row l uses ``taus[l]``."""
    taus = np.asarray(taus, dtype=float)[:, None]
    return np.where(R >= 0, taus, 1.0 - taus)


def mcp_penalty(v, lam, r):
    """Minimax concave penalty rho(|v|; lam, r), elementwise in ``v``."""
    if not r > 1:
        raise ConfigError(f"MCP regularization r must exceed 1, got {r}")
    if lam < 0:
        raise ConfigError("penalty level must be nonnegative")
    a = np.abs(np.asarray(v, dtype=float))
    out = np.where(a <= r * lam, lam * a - a * a / (2.0 * r), 0.5 * r * lam * lam)
    return float(out) if out.ndim == 0 else out


def mcp_derivative(v, lam, r):
    """d rho / d|v| = lam * (1 - |v| / (r lam))_+ ."""
    a = np.abs(np.asarray(v, dtype=float))
    if lam == 0:
        return np.zeros_like(a)
    return lam * np.clip(1.0 - a / (r * lam), 0.0, None)


def effective_interactions(coefficients):
    """(q, p) interaction coefficients: ``beta * gamma`` or the stored ``eta``."""
    if coefficients.gamma is not None:
        return coefficients.gamma * coefficients.beta[None, :]
    return coefficients.eta.copy()


def _check_dims(data, coefficients, grid=None):
    if coefficients.alpha.size != data.q or coefficients.beta.size != data.p:
        raise DimensionError(
            f"coefficients (q={coefficients.alpha.size}, p={coefficients.beta.size}) "
            f"do not match data (q={data.q}, p={data.p})")
    if grid is not None and coefficients.intercepts.size != grid.L:
        raise DimensionError(
            f"{coefficients.intercepts.size} intercepts for {grid.L} expectile levels")


def linear_predictor(data, coefficients):
    """``Z alpha + X beta + sum_k M^(k) eta_k`` without intercepts, shape (n,)."""
    _check_dims(data, coefficients)
    eta = effective_interactions(coefficients)
    out = data.z @ coefficients.alpha + data.x @ coefficients.beta
    if data.q and data.p:
        out = out + np.einsum("ij,ij->i", data.x, data.z @ eta)
    return out


def residual_matrix(data, coefficients):
    """(L, n) residuals ``y - b_l - linear predictor``."""
    lin = linear_predictor(data, coefficients)
    return data.y[None, :] - coefficients.intercepts[:, None] - lin[None, :]


def composite_loss(data, coefficients, grid):
    """Unpenalized part: (1/2n) sum over levels and subjects of the expectile loss."""
    _check_dims(data, coefficients, grid)
    R = residual_matrix(data, coefficients)
    W = level_weights(R, grid.levels)
    return float(np.sum(W * R * R)) / (2.0 * data.n)


def penalty_value(coefficients, penalty):
    total = float(np.sum(mcp_penalty(coefficients.beta, penalty.lambda1, penalty.r)))
    inter = coefficients.interaction_block()
    total += float(np.sum(mcp_penalty(inter, penalty.lambda2, penalty.r)))
    return total


def composite_objective(data, coefficients, grid, penalty):
    """Penalized composite expectile objective.

    The MCP terms are applied once (not per level); in hierarchical mode
    ``lambda2`` penalizes gamma, otherwise it penalizes eta directly.
    """
    return composite_loss(data, coefficients, grid) + penalty_value(coefficients, penalty)


def composite_loss_gradient(data, coefficients, grid):
    """Gradient of :func:`composite_loss` as a CoefficientSet of partial derivatives."""
    _check_dims(data, coefficients, grid)
    R = residual_matrix(data, coefficients)
    W = level_weights(R, grid.levels)
    WR = W * R
    n = data.n
    g = WR.sum(axis=0)
    d_b = -WR.sum(axis=1) / n
    d_alpha = -(data.z.T @ g) / n
    zg = data.z * g[:, None]
    cross = zg.T @ data.x  # (q, p): sum_i z_ik x_ij g_i
    if coefficients.gamma is not None:
        gamma = coefficients.gamma
        mult = 1.0 + data.z @ gamma
        d_beta = -np.einsum("ij,ij,i->j", data.x, mult, g) / n
        d_gamma = -cross * coefficients.beta[None, :] / n
        return CoefficientSet(d_b, d_alpha, d_beta, gamma=d_gamma)
    d_beta = -(data.x.T @ g) / n
    return CoefficientSet(d_b, d_alpha, d_beta, eta=-cross / n)


def mean_absolute_deviation(data, coefficients):
    """(1/nL) sum over levels of the L1 norm of the level residuals."""
    R = residual_matrix(data, coefficients)
    return float(np.mean(np.abs(R)))


def degrees_of_freedom(coefficients, zero_tol=0.0):
    """Nonzero G main effects plus nonzero effective interactions."""
    eta = effective_interactions(coefficients)
    return int(np.sum(np.abs(coefficients.beta) > zero_tol) + np.sum(np.abs(eta) > zero_tol))


def as_grid(levels: Sequence[float] | ExpectileGrid | int):
    """Coerce an int (equally spaced L), a sequence of taus, or a grid."""
    if isinstance(levels, ExpectileGrid):
        return levels
    if isinstance(levels, (int, np.integer)):
        return ExpectileGrid.equally_spaced(int(levels))
    return ExpectileGrid(tuple(levels))
