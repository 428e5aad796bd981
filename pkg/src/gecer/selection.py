"""Tuning-parameter selection by BIC grid search and resampled test-set evaluation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, ConfigError, DimensionError, InputDomainError
from .errors import RankDeficiencyError, SelectionError
from .model_core import PenaltyConfig, level_weights, mean_absolute_deviation, residual_matrix
from .solver import SolverOptions, fit

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.1, 0.5, 1.0, 1.5, 2.0)

# fits that fail with these are recorded in the table rather than aborting the search
FIT_ERRORS = (ConditioningError, RankDeficiencyError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class TuningGrid:
    lambda1_values: tuple = DEFAULT_LAMBDAS
    lambda2_values: tuple = DEFAULT_LAMBDAS
    r: float = 3.0

    def __post_init__(self):
        l1 = tuple(float(v) for v in np.atleast_1d(self.lambda1_values))
        l2 = tuple(float(v) for v in np.atleast_1d(self.lambda2_values))
        if not l1 or not l2:
            raise ConfigError("tuning grid needs at least one value per penalty")
        if not self.r > 1:
            raise ConfigError(f"MCP regularization r must exceed 1, got {self.r}")
        if min(l1 + l2) < 0:
            raise ConfigError("penalty levels must be nonnegative")
        object.__setattr__(self, "lambda1_values", l1)
        object.__setattr__(self, "lambda2_values", l2)

    def penalties(self):
        for lam1 in self.lambda1_values:
            for lam2 in self.lambda2_values:
                yield PenaltyConfig(lam1, lam2, self.r)

    def __len__(self):
        return len(self.lambda1_values) * len(self.lambda2_values)


@dataclass
class SelectionResult:
    best_fit: object
    bic_table: list = field(default_factory=list)
    bic_constant: float = 1.0

    @property
    def best_row(self):
        best = self.best_fit.penalty
        for row in self.bic_table:
            if row["lambda1"] == best.lambda1 and row["lambda2"] == best.lambda2:
                return row
        return None


def bic(fit_result, data, grid, c=1.0):
    """Data-driven BIC of a fitted model.

    ``(c / nL) * sum_l ||W_l^{1/2} res_l||^2 + df * log(log n) * log(pq + p + q) / n``
    with weights taken at the fitted residuals.
    """
    n = data.n
    if n <= np.e:
        raise InputDomainError(f"BIC needs n > e so that log(log n) > 0, got n={n}")
    coef = fit_result.coefficients
    if coef.alpha.size != data.q or coef.beta.size != data.p or coef.intercepts.size != grid.L:
        raise DimensionError("fit does not match the data / expectile grid")
    R = residual_matrix(data, coef)
    W = level_weights(R, grid.levels)
    fit_term = c * float(np.sum(W * R * R)) / (n * grid.L)
    df = fit_result.df
    if df == 0:
        return fit_term
    v = data.p * data.q + data.p + data.q
    return fit_term + df * np.log(np.log(n)) * np.log(v) / n


def _selection_key(row):
    # minimal BIC; ties go to the larger (sparser) penalty pair
    return (row["bic"], -row["lambda1"], -row["lambda2"])


def grid_search(data, grid, tuning=TuningGrid(), options=SolverOptions(), mode="hierarchical",
                c=1.0, on_fit=None):
    """Fit every (lambda1, lambda2) pair and keep the converged fit with minimal BIC.

    Grid points that fail to converge or raise a numerical error stay in the
    table (``bic`` is NaN for failures) but are not eligible.  ``on_fit`` is
    called with every successful FitResult.
    """
    table = []
    best_fit = None
    best_key = None
    for penalty in tuning.penalties():
        row = {"lambda1": penalty.lambda1, "lambda2": penalty.lambda2,
               "bic": float("nan"), "df": -1, "converged": False, "iterations": 0, "error": ""}
        try:
            result = fit(data, grid, penalty, options, mode)
        except FIT_ERRORS as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            table.append(row)
            continue
        if on_fit is not None:
            on_fit(result)
        row.update(bic=bic(result, data, grid, c), df=result.df,
                   converged=result.converged, iterations=result.iterations)
        table.append(row)
        if not result.converged:
            continue
        key = _selection_key(row)
        if best_key is None or key < best_key:
            best_key, best_fit = key, result
    if best_fit is None:
        raise SelectionError("no grid point produced a converged fit", table=table)
    return SelectionResult(best_fit=best_fit, bic_table=table, bic_constant=c)


def make_splits(n, split_ratio, n_resamples, seed):
    """Random train/test partitions; split ``i`` uses the stream (seed, i)."""
    if not (0 < split_ratio < 1):
        raise ConfigError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    if n_resamples < 1:
        raise ConfigError("n_resamples must be at least 1")
    n_train = int(round(split_ratio * n))
    if n_train < 1 or n_train > n - 1:
        raise ConfigError(
            f"split_ratio={split_ratio} with n={n} leaves an empty training or test set")
    splits = []
    for i in range(n_resamples):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        perm = rng.permutation(n)
        splits.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    return splits


def evaluate_splits(data, splits, grid, tuning=TuningGrid(), options=SolverOptions(),
                    mode="hierarchical", c=1.0):
    """Test-set MAD of the BIC-selected fit for each (train, test) split."""
    mads = []
    for train, test in splits:
        selected = grid_search(data.subset(train), grid, tuning, options, mode, c)
        mads.append(mean_absolute_deviation(data.subset(test), selected.best_fit.coefficients))
    return np.array(mads)


def resample_evaluate(data, grid, tuning=TuningGrid(), options=SolverOptions(),
                      mode="hierarchical", split_ratio=0.7, n_resamples=50, seed=0, c=1.0):
    """Mean and standard deviation of out-of-sample MAD over random splits.

    Returns ``(mean, sd, mads)``; ``sd`` uses ``ddof=1`` (0 for a single split).
    """
    splits = make_splits(data.n, split_ratio, n_resamples, seed)
    mads = evaluate_splits(data, splits, grid, tuning, options, mode, c)
    sd = float(np.std(mads, ddof=1)) if mads.size > 1 else 0.0
    return float(np.mean(mads)), sd, mads
