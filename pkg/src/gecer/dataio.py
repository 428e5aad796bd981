"""CSV ingestion, marginal screening, run configuration and result files."""

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import platform
from importlib import resources
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .model_core import (
    Dataset,
    ExpectileGrid,
    PenaltyConfig,
    composite_loss,
    effective_interactions,
)
from .selection import TuningGrid
from .simulation import METRICS, GroundTruth, MethodSpec, SimulationConfig
from .solver import SolverOptions, fit, normalize_mode

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none", "?"}


def fmt(value):
    """17-significant-digit decimal, enough to round-trip any double."""
    return format(float(value), ".17g")


@dataclass(frozen=True)
class ColumnSpec:
    """Which CSV columns form y, the E factors and the G factors.

    ``g_columns=None`` takes every remaining column.
    """

    response_column: str
    e_columns: tuple = ()
    g_columns: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "e_columns", tuple(self.e_columns))
        if self.g_columns is not None:
            object.__setattr__(self, "g_columns", tuple(self.g_columns))
        used = [self.response_column, *self.e_columns, *(self.g_columns or ())]
        if len(set(used)) != len(used):
            raise ConfigError(f"response, E and G columns must be disjoint: {used}")


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, expected a header row") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    return header, rows


def read_csv(path, spec, standardize=False):
    """Parse ``path`` into a Dataset; returns ``(dataset, n_rows_dropped)``.

    Rows with a missing cell in any used column are dropped (never imputed).
    With ``standardize`` the G columns are centered and scaled to unit
    (population) variance.
    """
    header, rows = _read_rows(path)
    index = {name: i for i, name in enumerate(header)}
    wanted = [spec.response_column, *spec.e_columns]
    if spec.g_columns is None:
        g_names = [h for h in header if h not in set(wanted)]
    else:
        g_names = list(spec.g_columns)
    for name in wanted + g_names:
        if name not in index:
            raise DataFormatError(f"{path}: column {name!r} not found in header")
    cols = [index[c] for c in wanted + g_names]
    values = []
    dropped = 0
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}, line {r}: expected {len(header)} fields, found {len(row)}")
        cells = [row[c].strip() for c in cols]
        if any(cell.lower() in MISSING_TOKENS for cell in cells):
            dropped += 1
            continue
        parsed = []
        for c, cell in zip(cols, cells):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}, line {r}, column {header[c]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataFormatError(
                    f"{path}, line {r}, column {header[c]!r}: non-finite value {cell!r}")
            parsed.append(v)
        values.append(parsed)
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if not values:
        raise DataFormatError(f"{path}: no complete data rows")
    arr = np.array(values, dtype=float)
    q = len(spec.e_columns)
    y, z, x = arr[:, 0], arr[:, 1:1 + q], arr[:, 1 + q:]
    if standardize and x.shape[1]:
        x = standardize_columns(x, g_names)
    return Dataset(y, z, x, tuple(spec.e_columns), tuple(g_names)), dropped


def load_csv(path, spec, standardize=False):
    """Dataset from a headed CSV file; see :func:`read_csv`."""
    return read_csv(path, spec, standardize)[0]


def standardize_columns(x, names=None):
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    bad = np.flatnonzero(sd == 0)
    if bad.size:
        label = names[bad[0]] if names is not None else f"#{bad[0]}"
        raise DataFormatError(f"zero variance column {label!r} cannot be standardized")
    return (x - mean) / sd


def write_csv(data, path, response_name="y"):
    """Write y, E and G columns with 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response_name, *data.z_names, *data.x_names])
        for i in range(data.n):
            w.writerow([fmt(data.y[i]), *map(fmt, data.z[i]), *map(fmt, data.x[i])])


def toy_csv_path():
    """Bundled 80-subject example: response ``y``, E factors e1-e3, G factors g1-g10."""
    return Path(str(resources.files("gecer") / "data" / "toy.csv"))


def column_spec_for(data, response_name="y"):
    return ColumnSpec(response_name, data.z_names, data.x_names)


def marginal_screen(data, keep, grid, options=None):
    """Keep the ``keep`` G columns whose marginal fit most reduces composite expectile loss.

    Each candidate model has the per-level intercepts, the E effects and a
    single unpenalized G column; the null model drops the G column.  Ties
    keep the earlier column.  Returns ``(reduced dataset, report)`` where the
    report lists ``(rank, name, original index, loss decrease)`` for the kept
    columns.
    """
    if keep <= 0:
        raise ConfigError(f"screening must keep at least one column, got {keep}")
    if keep > data.p:
        raise ConfigError(f"cannot keep {keep} of {data.p} G columns")
    grid = grid if isinstance(grid, ExpectileGrid) else ExpectileGrid.equally_spaced(grid)
    options = options or SolverOptions(rel_tolerance=1e-10, freeze_interactions=True)
    free = PenaltyConfig(0.0, 0.0, 3.0)
    null = data.subset(g_columns=[])
    null_loss = composite_loss(null, fit(null, grid, free, options).coefficients, grid)
    decrease = np.empty(data.p)
    for j in range(data.p):
        one = data.subset(g_columns=[j])
        res = fit(one, grid, free, options)
        decrease[j] = null_loss - composite_loss(one, res.coefficients, grid)
    order = np.argsort(-decrease, kind="stable")[:keep]
    report = [(rank + 1, data.x_names[j], int(j), float(decrease[j]))
              for rank, j in enumerate(order)]
    return data.subset(g_columns=np.sort(order)), report


# --- run configuration -------------------------------------------------------

def _list(text, cast=float):
    text = str(text).strip()
    if not text:
        return ()
    return tuple(cast(t.strip()) for t in text.split(",") if t.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _join(values):
    return ", ".join(fmt(v) if isinstance(v, float) else str(v) for v in values)


@dataclass
class RunConfig:
    """Everything a CLI run depends on; serialized as an INI document.

    Sections: ``[data]``, ``[model]``, ``[tuning]``, ``[solver]``,
    ``[simulation]``, ``[output]``.
    """

    # [data]
    csv: str = ""
    response: str = "y"
    e_columns: tuple = ()
    g_columns: tuple = None
    standardize: bool = False
    screen_keep: int = 0
    # [model]
    mode: str = "cer"
    levels: int = 9
    taus: tuple = ()
    seed: int = 0
    resamples: int = 0
    split_ratio: float = 0.7
    # [tuning]
    lambda1: tuple = (0.1, 0.5, 1.0, 1.5, 2.0)
    lambda2: tuple = (0.1, 0.5, 1.0, 1.5, 2.0)
    r: float = 3.0
    bic_constant: float = 1.0
    # [solver]
    max_outer_iterations: int = 1000
    rel_tolerance: float = 1e-4
    intercept_tolerance: float = 1e-10
    nonconvex: str = "exact"
    # [simulation]
    error_kind: str = "normal"
    n: int = 200
    p: int = 100
    q: int = 5
    n_nonzero_alpha: int = 5
    n_nonzero_beta: int = 20
    n_nonzero_gamma: int = 40
    truth_seed: int = 2023
    n_replicates: int = 20
    methods: tuple = ("er:0.1", "er:0.25", "er:0.5", "er:0.75", "er:0.9", "cer", "cer-nonhier")
    # [output]
    out: str = "results"

    SECTIONS = {
        "data": ("csv", "response", "e_columns", "g_columns", "standardize", "screen_keep"),
        "model": ("mode", "levels", "taus", "seed", "resamples", "split_ratio"),
        "tuning": ("lambda1", "lambda2", "r", "bic_constant"),
        "solver": ("max_outer_iterations", "rel_tolerance", "intercept_tolerance", "nonconvex"),
        "simulation": ("error_kind", "n", "p", "q", "n_nonzero_alpha", "n_nonzero_beta",
                       "n_nonzero_gamma", "truth_seed", "n_replicates", "methods"),
        "output": ("out",),
    }

    def __post_init__(self):
        self.e_columns = tuple(self.e_columns)
        if self.g_columns is not None:
            self.g_columns = tuple(self.g_columns)
        self.taus = tuple(float(t) for t in self.taus)
        self.lambda1 = tuple(float(v) for v in self.lambda1)
        self.lambda2 = tuple(float(v) for v in self.lambda2)
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self):
        try:
            normalize_mode(self.mode)
        except ConfigError as exc:
            raise ConfigError(f"[model] mode: {exc}") from None
        checks = [
            (self.levels >= 1, "model", "levels", "must be a positive integer"),
            (self.resamples >= 0, "model", "resamples", "must be nonnegative"),
            (0 < self.split_ratio < 1, "model", "split_ratio", "must lie in (0, 1)"),
            (len(self.lambda1) > 0, "tuning", "lambda1", "needs at least one value"),
            (len(self.lambda2) > 0, "tuning", "lambda2", "needs at least one value"),
            (self.r > 1, "tuning", "r", "must exceed 1"),
            (self.bic_constant > 0, "tuning", "bic_constant", "must be positive"),
            (self.n_replicates >= 1, "simulation", "n_replicates", "must be at least 1"),
            (self.screen_keep >= 0, "data", "screen_keep", "must be nonnegative"),
        ]
        for ok, section, key, msg in checks:
            if not ok:
                raise ConfigError(f"[{section}] {key} {msg} (got {getattr(self, key)!r})")
        for section, key, build in (("model", "taus", self.grid),
                                    ("tuning", "lambda1", self.tuning),
                                    ("solver", "nonconvex", self.solver_options),
                                    ("simulation", "error_kind", self.simulation_config),
                                    ("simulation", "methods", self.method_specs)):
            try:
                build()
            except ConfigError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None

    # builders
    def grid(self):
        if self.taus:
            return ExpectileGrid(self.taus)
        if normalize_mode(self.mode) == "single-level":
            return ExpectileGrid.single(0.5)
        return ExpectileGrid.equally_spaced(self.levels)

    def tuning(self):
        return TuningGrid(self.lambda1, self.lambda2, self.r)

    def solver_options(self):
        return SolverOptions(self.max_outer_iterations, self.rel_tolerance,
                             self.intercept_tolerance, self.nonconvex)

    def simulation_config(self, seed=None):
        return SimulationConfig(
            n=self.n, p=self.p, q=self.q, error_kind=self.error_kind,
            n_nonzero_alpha=min(self.n_nonzero_alpha, self.q),
            n_nonzero_beta=self.n_nonzero_beta, n_nonzero_gamma=self.n_nonzero_gamma,
            seed=self.seed if seed is None else seed, truth_seed=self.truth_seed)

    def method_specs(self):
        return [parse_method(m, self.levels) for m in self.methods]

    def column_spec(self):
        return ColumnSpec(self.response, self.e_columns, self.g_columns)

    # serialization
    def to_ini(self):
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in self.SECTIONS.items():
            parser[section] = {k: self._dump(getattr(self, k)) for k in keys}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @staticmethod
    def _dump(value):
        if value is None:
            return "*"
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, tuple):
            return _join(value)
        if isinstance(value, float):
            return fmt(value)
        return str(value)

    @classmethod
    def from_ini(cls, text):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file: {exc}") from None
        known = {k: s for s, keys in cls.SECTIONS.items() for k in keys}
        kwargs = {}
        types = {f.name: f.default for f in fields(cls)}
        for section in parser.sections():
            if section not in cls.SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                if known.get(key) != section:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kwargs[key] = cls._parse(key, raw, types[key], section)
        return cls(**kwargs)

    @staticmethod
    def _parse(key, raw, default, section):
        try:
            if key == "g_columns":
                return None if raw.strip() in ("*", "") else _list(raw, str)
            if key in ("e_columns", "methods"):
                return _list(raw, str)
            if isinstance(default, bool):
                return _bool(raw)
            if isinstance(default, tuple):
                return _list(raw, float)
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            return raw.strip()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        return cls.from_ini(text)

    def save(self, path):
        Path(path).write_text(self.to_ini(), encoding="utf-8")

    def digest(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def updated(self, **overrides):
        values = asdict(self)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**values)


def parse_method(text, levels=9):
    """``er:<tau>``, ``cer`` or ``cer-nonhier`` (optionally ``cer:<L>``)."""
    name, _, arg = str(text).strip().partition(":")
    name = name.lower()
    try:
        if name == "er":
            return MethodSpec.er(float(arg) if arg else 0.5)
        if name == "cer":
            return MethodSpec.cer(int(arg) if arg else levels)
        if name in ("cer-nonhier", "cer_nonhier"):
            return MethodSpec.cer_nonhier(int(arg) if arg else levels)
    except ValueError:
        pass
    raise ConfigError(f"unknown method descriptor {text!r}")


# --- result files ------------------------------------------------------------

def write_coefficients(path, data, coefficients, zero_tol=0.0):
    """Identified effects table.

    Header ``gene,main,<E names>``.  The first row (blank gene and main)
    holds the E effects; each following row is a G factor with a nonzero
    main effect or interaction, with its effective interaction per E factor.
    Zero entries are left blank.
    """
    eta = effective_interactions(coefficients)
    blank = lambda v: "" if abs(v) <= zero_tol else fmt(v)  # noqa: E731
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gene", "main", *data.z_names])
        w.writerow(["", "", *map(blank, coefficients.alpha)])
        for j, name in enumerate(data.x_names):
            if abs(coefficients.beta[j]) <= zero_tol and not np.any(np.abs(eta[:, j]) > zero_tol):
                continue
            w.writerow([name, blank(coefficients.beta[j]), *map(blank, eta[:, j])])


def read_coefficients(path):
    """Parse a coefficients file back into (alpha row, {gene: (main, interactions)})."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    num = lambda v: float(v) if v else 0.0  # noqa: E731
    alpha = [num(v) for v in rows[1][2:]]
    genes = {r[0]: (num(r[1]), [num(v) for v in r[2:]]) for r in rows[2:]}
    return rows[0], alpha, genes


def write_table(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def write_bic_table(path, table):
    write_table(path, table,
                ["lambda1", "lambda2", "bic", "df", "converged", "iterations", "error"])


def write_report(path, report):
    """Per-method mean(sd) summary plus raw means and sds for plotting."""
    summ = report.summary()
    rows = []
    for m in report.methods:
        row = {"method": m, "failures": report.failures.get(m, 0)}
        for metric in METRICS:
            mean, sd = summ[m][metric]
            row[metric] = f"{mean:.2f}({sd:.2f})"
            row[f"{metric}_mean"] = float(mean)
            row[f"{metric}_sd"] = float(sd)
        rows.append(row)
    cols = (["method", *METRICS]
            + [f"{m}_{s}" for m in METRICS for s in ("mean", "sd")] + ["failures"])
    write_table(path, rows, cols)


def write_replicates(path, report):
    cols = ["method", "replicate", "AE", "SE", "TP", "FP", "MAD", "lambda1", "lambda2", "df",
            "hierarchy_violations"]
    write_table(path, report.records, cols)


def write_truth(path, truth):
    doc = {"alpha": truth.alpha0.tolist(), "beta": truth.beta0.tolist(),
           "gamma": truth.gamma0.tolist(), "eta": truth.eta0.tolist()}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_truth(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth(np.array(doc["alpha"]), np.array(doc["beta"]), np.array(doc["gamma"]))


def versions():
    import numba
    import scipy

    from . import __version__

    return {"gecer": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def write_meta(path, config, command, extra=None):
    doc = {"command": command, "config_sha256": config.digest(), "seed": config.seed,
           "versions": versions(), "config": config.to_ini()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
