"""Synthetic G-E data, evaluation metrics and seeded replicate studies.

Two data-generating settings are provided:

* homoscedastic (``generate_setting1``): AR(0.3) Gaussian E factors with the
  last two dichotomized at 0, AR(0.3) Gaussian G factors, and N(0, 1) or
  t(4)/sqrt(2) errors;
* heteroscedastic (``generate_setting2``): the first E and G columns are
  pushed through the standard normal CDF and the error is scaled by their
  sum.

The true coefficients are drawn once from ``truth_seed`` and held fixed
across replicates; covariates and errors are drawn from ``seed``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DimensionError, SelectionError
from .model_core import (
    Dataset,
    ExpectileGrid,
    effective_interactions,
    mean_absolute_deviation,
)
from .selection import FIT_ERRORS, TuningGrid, grid_search
from .solver import HIERARCHICAL, NON_HIERARCHICAL, SINGLE_LEVEL, SolverOptions

logger = logging.getLogger(__name__)

ERROR_KINDS = ("normal", "scaled_t4", "heteroscedastic")
METRICS = ("AE", "SE", "TP", "FP", "MAD")


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 500
    p: int = 500
    q: int = 5
    error_kind: str = "normal"
    n_nonzero_alpha: int = 5
    n_nonzero_beta: int = 20
    n_nonzero_gamma: int = 40
    seed: int = 0
    truth_seed: int = 2023
    ar_rho: float = 0.3
    n_binary: int = 2
    coef_low: float = 0.8
    coef_high: float = 1.2

    def __post_init__(self):
        if self.n < 1 or self.p < 0 or self.q < 0:
            raise ConfigError("n must be positive and p, q nonnegative")
        if self.error_kind not in ERROR_KINDS:
            raise ConfigError(f"error_kind must be one of {ERROR_KINDS}, got {self.error_kind!r}")
        if not 0 <= self.n_nonzero_alpha <= self.q:
            raise ConfigError("n_nonzero_alpha must lie in [0, q]")
        if not 0 <= self.n_nonzero_beta <= self.p:
            raise ConfigError("n_nonzero_beta must lie in [0, p]")
        if not 0 <= self.n_nonzero_gamma <= self.n_nonzero_beta * self.q:
            raise ConfigError(
                "n_nonzero_gamma must not exceed n_nonzero_beta * q "
                "(every true interaction needs a true main effect)")
        if not -1 < self.ar_rho < 1:
            raise ConfigError("ar_rho must lie in (-1, 1)")
        if not 0 <= self.n_binary <= self.q:
            raise ConfigError("n_binary must lie in [0, q]")
        if not self.coef_low <= self.coef_high:
            raise ConfigError("coef_low must not exceed coef_high")


@dataclass
class GroundTruth:
    alpha0: np.ndarray
    beta0: np.ndarray
    gamma0: np.ndarray

    @property
    def eta0(self):
        return self.gamma0 * self.beta0[None, :]

    @property
    def beta_support(self):
        return np.flatnonzero(self.beta0)

    @property
    def eta_support(self):
        return np.argwhere(self.eta0 != 0)

    @property
    def support_size(self):
        return int(np.count_nonzero(self.beta0) + np.count_nonzero(self.eta0))


def make_truth(config):
    """Fixed true coefficients with the deterministic support layout.

    beta is nonzero on the first ``n_nonzero_beta`` columns; the interaction
    positions cycle over those columns, shifting the E-factor row by one per
    pass so that each true main effect carries distinct interactions.
    """
    rng = np.random.default_rng(config.truth_seed)
    lo, hi = config.coef_low, config.coef_high
    alpha0 = np.zeros(config.q)
    alpha0[:config.n_nonzero_alpha] = rng.uniform(lo, hi, config.n_nonzero_alpha)
    beta0 = np.zeros(config.p)
    nb = config.n_nonzero_beta
    beta0[:nb] = rng.uniform(lo, hi, nb)
    gamma0 = np.zeros((config.q, config.p))
    values = rng.uniform(lo, hi, config.n_nonzero_gamma)
    for idx in range(config.n_nonzero_gamma):
        j = idx % nb
        k = (idx // nb + j) % config.q
        gamma0[k, j] = values[idx]
    return GroundTruth(alpha0, beta0, gamma0)


def ar_normal(rng, n, d, rho):
    """n draws of a d-variate N(0, R) with R_ij = rho**|i-j| (unit variances)."""
    e = rng.standard_normal((n, d))
    out = np.empty_like(e)
    if d == 0:
        return out
    scale = np.sqrt(1.0 - rho * rho)
    out[:, 0] = e[:, 0]
    for j in range(1, d):
        out[:, j] = rho * out[:, j - 1] + scale * e[:, j]
    return out


def _covariates(config, rng):
    z = ar_normal(rng, config.n, config.q, config.ar_rho)
    if config.n_binary:
        z[:, config.q - config.n_binary:] = (z[:, config.q - config.n_binary:] > 0).astype(float)
    x = ar_normal(rng, config.n, config.p, config.ar_rho)
    return z, x


def noiseless_response(z, x, truth):
    lin = z @ truth.alpha0 + x @ truth.beta0
    if z.shape[1] and x.shape[1]:
        lin = lin + np.einsum("ij,ij->i", x, z @ truth.eta0)
    return lin


def _errors(kind, rng, n):
    if kind == "scaled_t4":
        return rng.standard_t(4, size=n) / np.sqrt(2.0)
    return rng.standard_normal(n)


def generate_setting1(config, truth=None, noise=None):
    """Homoscedastic data; ``noise`` replaces the drawn errors when given."""
    if config.error_kind == "heteroscedastic":
        raise ConfigError("use generate_setting2 for heteroscedastic errors")
    truth = make_truth(config) if truth is None else truth
    rng = np.random.default_rng(config.seed)
    z, x = _covariates(config, rng)
    eps = _errors(config.error_kind, rng, config.n)
    if noise is not None:
        eps = np.broadcast_to(np.asarray(noise, dtype=float), (config.n,))
    y = noiseless_response(z, x, truth) + eps
    return Dataset(y, z, x), truth


def noise_scale(z, x):
    """Per-subject error scale Z_1 + X_1 of the heteroscedastic setting."""
    return z[:, 0] + x[:, 0]


def generate_setting2(config, truth=None, noise=None):
    """Heteroscedastic data: first E and G columns mapped through Phi; error scale Z_1 + X_1."""
    if config.q < 1 or config.p < 1:
        raise ConfigError("the heteroscedastic setting needs q >= 1 and p >= 1")
    truth = make_truth(config) if truth is None else truth
    rng = np.random.default_rng(config.seed)
    z, x = _covariates(config, rng)
    z[:, 0] = norm.cdf(z[:, 0])
    x[:, 0] = norm.cdf(x[:, 0])
    eps = rng.standard_normal(config.n)
    if noise is not None:
        eps = np.broadcast_to(np.asarray(noise, dtype=float), (config.n,))
    y = noiseless_response(z, x, truth) + np.abs(noise_scale(z, x)) * eps
    return Dataset(y, z, x), truth


def generate(config, truth=None):
    if config.error_kind == "heteroscedastic":
        return generate_setting2(config, truth)
    return generate_setting1(config, truth)


def _errors_vs_truth(est, truth):
    if est.alpha.shape != truth.alpha0.shape or est.beta.shape != truth.beta0.shape:
        raise DimensionError("estimate and truth have different dimensions")
    eta = effective_interactions(est)
    return np.concatenate([
        (est.alpha - truth.alpha0).ravel(),
        (est.beta - truth.beta0).ravel(),
        (eta - truth.eta0).ravel(),
    ])


def metric_ae(est, truth):
    """Sum of absolute errors over alpha, beta and the effective interactions."""
    return float(np.sum(np.abs(_errors_vs_truth(est, truth))))


def metric_se(est, truth):
    """Euclidean norm of the same error vector."""
    return float(np.sqrt(np.sum(_errors_vs_truth(est, truth) ** 2)))


def metric_mad(fit_result, data, grid=None):
    """Mean absolute residual over subjects and expectile levels."""
    coef = fit_result.coefficients if hasattr(fit_result, "coefficients") else fit_result
    if grid is not None and coef.intercepts.size != grid.L:
        raise DimensionError("fit does not match the expectile grid")
    return mean_absolute_deviation(data, coef)


def metric_tp_fp(est, truth, zero_tol=1e-8):
    """True / false positives over G main effects and effective interactions."""
    if zero_tol < 0:
        raise ConfigError("zero_tol must be nonnegative")
    if est.beta.shape != truth.beta0.shape:
        raise DimensionError("estimate and truth have different dimensions")
    found = np.concatenate([np.abs(est.beta) > zero_tol,
                            (np.abs(effective_interactions(est)) > zero_tol).ravel()])
    true = np.concatenate([truth.beta0 != 0, (truth.eta0 != 0).ravel()])
    return int(np.sum(found & true)), int(np.sum(found & ~true))


@dataclass(frozen=True)
class MethodSpec:
    """A fitter in a benchmark: display name, solver mode and expectile grid."""

    name: str
    mode: str
    grid: ExpectileGrid

    @classmethod
    def er(cls, tau):
        return cls(f"ER(tau={tau:.2f})", SINGLE_LEVEL, ExpectileGrid.single(tau))

    @classmethod
    def cer(cls, L=9):
        return cls("CER", HIERARCHICAL, ExpectileGrid.equally_spaced(L))

    @classmethod
    def cer_nonhier(cls, L=9):
        return cls("non-hierarchical CER", NON_HIERARCHICAL, ExpectileGrid.equally_spaced(L))


def standard_methods(L=9, taus=(0.1, 0.25, 0.5, 0.75, 0.9)):
    """ER at each tau, hierarchical CER and non-hierarchical CER."""
    return [MethodSpec.er(t) for t in taus] + [MethodSpec.cer(L), MethodSpec.cer_nonhier(L)]


def format_mean_sd(mean, sd, digits=2):
    return f"{mean:.{digits}f}({sd:.{digits}f})"


@dataclass
class ReplicateReport:
    """Per-replicate metric records and failure counts, per method."""

    methods: list
    records: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    n_replicates: int = 0

    def values(self, method, metric):
        return np.array([r[metric] for r in self.records if r["method"] == method], dtype=float)

    def summary(self):
        """{method: {metric: (mean, sd)}} with sample sd (ddof=1)."""
        out = {}
        for m in self.methods:
            out[m] = {}
            for metric in METRICS:
                v = self.values(m, metric)
                if v.size == 0:
                    out[m][metric] = (float("nan"), float("nan"))
                else:
                    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
                    out[m][metric] = (float(np.mean(v)), sd)
        return out

    def table_rows(self, digits=2):
        summ = self.summary()
        rows = []
        for m in self.methods:
            row = {"method": m}
            for metric in METRICS:
                row[metric] = format_mean_sd(*summ[m][metric], digits=digits)
            row["failures"] = self.failures.get(m, 0)
            rows.append(row)
        return rows

    def render(self, digits=2):
        rows = self.table_rows(digits)
        header = ["Method", *METRICS]
        body = [[r["method"], *(r[k] for k in METRICS)] for r in rows]
        widths = [max(len(str(c)) for c in col) for col in zip(header, *body)]
        lines = [" | ".join(str(c).ljust(w) for c, w in zip(header, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in body]
        return "\n".join(lines)


def replicate_seed(seed, index):
    """Integer data seed for replicate ``index``, derived from the master seed."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def evaluate_method(data, truth, method, tuning=TuningGrid(), options=SolverOptions(), c=1.0,
                    zero_tol=1e-8, on_fit=None):
    """BIC-select one method on ``data`` and score it against ``truth``."""
    sel = grid_search(data, method.grid, tuning, options, method.mode, c, on_fit)
    best = sel.best_fit
    tp, fp = metric_tp_fp(best.coefficients, truth, zero_tol)
    return {
        "AE": metric_ae(best.coefficients, truth),
        "SE": metric_se(best.coefficients, truth),
        "TP": tp,
        "FP": fp,
        "MAD": metric_mad(best, data, method.grid),
        "lambda1": best.penalty.lambda1,
        "lambda2": best.penalty.lambda2,
        "df": best.df,
        "hierarchy_violations": hierarchy_violations(best.coefficients),
    }, best


def hierarchy_violations(coef):
    """Count of (k, j) with a nonzero effective interaction but beta_j == 0."""
    eta = effective_interactions(coef)
    return int(np.sum((eta != 0) & (coef.beta == 0)[None, :]))


def run_replicates(config, methods, n_replicates, tuning=TuningGrid(), seed=None,
                   options=SolverOptions(), c=1.0, zero_tol=1e-8, callback=None, on_fit=None):
    """Seeded replicate study.

    Replicate ``i`` draws its data from a seed derived from (``seed``, i);
    the true coefficients stay fixed.  Each method is BIC-selected over
    ``tuning`` and scored on AE, SE, TP, FP and in-sample MAD.  Fits that
    fail are counted per method and excluded from the summary.

    ``callback(record)`` sees each scored record; ``on_fit(method, fit)``
    sees every grid-point fit.
    """
    if n_replicates < 1:
        raise ConfigError("n_replicates must be at least 1")
    seed = config.seed if seed is None else seed
    truth = make_truth(config)
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate method names: {names}")
    report = ReplicateReport(methods=names, failures={m: 0 for m in names},
                             n_replicates=n_replicates)
    for i in range(n_replicates):
        data, _ = generate(replace(config, seed=replicate_seed(seed, i)), truth)
        for method in methods:
            try:
                hook = None if on_fit is None else (lambda f, m=method: on_fit(m, f))
                rec, _ = evaluate_method(data, truth, method, tuning, options, c, zero_tol, hook)
            except (SelectionError, *FIT_ERRORS) as exc:
                logger.warning("replicate %d, %s failed: %s", i, method.name, exc)
                report.failures[method.name] += 1
                continue
            rec.update(method=method.name, replicate=i)
            report.records.append(rec)
            if callback is not None:
                callback(rec)
    return report
