"""Command-line entry point: ``gecer {fit,simulate,benchmark,screen}``.

Exit status: 0 success, 2 input or configuration error, 3 no grid point
converged, 4 internal error.
"""

import argparse
import logging
import sys
from pathlib import Path

from .dataio import (
    RunConfig,
    read_csv,
    write_bic_table,
    write_coefficients,
    write_csv,
    write_meta,
    write_replicates,
    write_report,
    write_table,
    write_truth,
    marginal_screen,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DataFormatError,
    DimensionError,
    InputDomainError,
    RankDeficiencyError,
    SelectionError,
)
from .selection import grid_search, resample_evaluate
from .simulation import generate, run_replicates

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_INTERNAL = 4

logger = logging.getLogger("gecer")

INPUT_ERRORS = (ConfigError, DataFormatError, DimensionError, InputDomainError, OSError)


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--mode", choices=("cer", "er", "cer-nonhier"))
    lv = common.add_mutually_exclusive_group()
    lv.add_argument("--levels", type=int, metavar="L", help="equally spaced levels l/(L+1)")
    lv.add_argument("--tau", type=_floats, metavar="T", help="explicit expectile level(s)")
    common.add_argument("--lambda1", type=_floats, metavar="LIST")
    common.add_argument("--lambda2", type=_floats, metavar="LIST")
    common.add_argument("--r", type=float, help="MCP regularization parameter (> 1)")
    common.add_argument("--max-iter", type=int, dest="max_outer_iterations")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--csv", metavar="PATH", help="input data file")
    data.add_argument("--response", help="response column name")
    data.add_argument("--e-columns", type=_names, dest="e_columns", metavar="NAMES")
    data.add_argument("--g-columns", type=_names, dest="g_columns", metavar="NAMES",
                      help="G columns (default: all remaining)")
    data.add_argument("--standardize", action="store_true", default=None)

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--error-kind", dest="error_kind",
                     choices=("normal", "scaled_t4", "heteroscedastic"))
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=int)
    sim.add_argument("--q", type=int)
    sim.add_argument("--truth-seed", type=int, dest="truth_seed")

    parser = argparse.ArgumentParser(
        prog="gecer", description="Sparse composite expectile regression with G-E interactions")
    sub = parser.add_subparsers(dest="command", required=True)
    p_fit = sub.add_parser("fit", parents=[common, data], help="BIC-selected fit of a CSV dataset")
    p_fit.add_argument("--screen", type=int, dest="screen_keep", metavar="K",
                       help="marginally screen to K G columns first")
    p_fit.add_argument("--resamples", type=int, help="train/test resamplings for test MAD")
    p_fit.add_argument("--split-ratio", type=float, dest="split_ratio")
    sub.add_parser("simulate", parents=[common, sim], help="write one synthetic dataset")
    p_bench = sub.add_parser("benchmark", parents=[common, sim], help="replicate study")
    p_bench.add_argument("--replicates", type=int, dest="n_replicates")
    p_bench.add_argument("--methods", type=_names,
                         help="comma list of er:<tau>, cer, cer-nonhier")
    p_screen = sub.add_parser("screen", parents=[common, data], help="marginal screening only")
    p_screen.add_argument("--keep", type=int, dest="screen_keep", required=True)
    return parser


OVERRIDES = ("seed", "out", "mode", "levels", "lambda1", "lambda2", "r", "max_outer_iterations",
             "csv", "response", "e_columns", "g_columns", "standardize", "screen_keep",
             "resamples", "split_ratio", "error_kind", "n", "p", "q", "truth_seed",
             "n_replicates", "methods")


def resolve_config(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    if getattr(args, "tau", None) is not None:
        overrides["taus"] = args.tau
    return config.updated(**overrides)


def _out_dir(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(config):
    if not config.csv:
        raise ConfigError("[data] csv: no input file given")
    data, dropped = read_csv(config.csv, config.column_spec(), config.standardize)
    return data, dropped


def cmd_fit(config):
    data, dropped = _load(config)
    out = _out_dir(config)
    grid = config.grid()
    extra = {"rows_dropped": dropped, "n": data.n, "p_input": data.p, "q": data.q}
    if config.screen_keep:
        data, screened = marginal_screen(data, config.screen_keep, grid)
        _write_screen(out / "screen.csv", screened)
    mode = config.mode
    sel = grid_search(data, grid, config.tuning(), config.solver_options(), mode,
                      config.bic_constant)
    best = sel.best_fit
    write_coefficients(out / "coefficients.csv", data, best.coefficients)
    write_bic_table(out / "bic_table.csv", sel.bic_table)
    extra.update({
        "p": data.p, "levels": list(grid.levels), "lambda1": best.penalty.lambda1,
        "lambda2": best.penalty.lambda2, "r": best.penalty.r, "df": best.df,
        "converged": best.converged, "iterations": best.iterations,
        "intercepts": best.coefficients.intercepts.tolist()})
    if config.resamples:
        mean, sd, mads = resample_evaluate(
            data, grid, config.tuning(), config.solver_options(), mode,
            config.split_ratio, config.resamples, config.seed, config.bic_constant)
        write_table(out / "resamples.csv",
                    [{"resample": i, "MAD": float(m)} for i, m in enumerate(mads)],
                    ["resample", "MAD"])
        extra.update({"test_mad_mean": mean, "test_mad_sd": sd})
    write_meta(out / "meta.json", config, "fit", extra)
    print(f"selected lambda1={best.penalty.lambda1:g} lambda2={best.penalty.lambda2:g} "
          f"df={best.df}; wrote {out / 'coefficients.csv'}")


def _write_screen(path, screened):
    write_table(path, [{"rank": r, "name": n, "index": i, "loss_decrease": d}
                       for r, n, i, d in screened], ["rank", "name", "index", "loss_decrease"])


def cmd_screen(config):
    data, dropped = _load(config)
    out = _out_dir(config)
    reduced, screened = marginal_screen(data, config.screen_keep, config.grid())
    _write_screen(out / "screen.csv", screened)
    write_csv(reduced, out / "screened.csv", config.response)
    write_meta(out / "meta.json", config, "screen", {"rows_dropped": dropped, "kept": len(screened)})
    print(f"kept {len(screened)} of {data.p} G columns; wrote {out / 'screen.csv'}")


def cmd_simulate(config):
    out = _out_dir(config)
    data, truth = generate(config.simulation_config())
    write_csv(data, out / "data.csv")
    write_truth(out / "truth.json", truth)
    write_meta(out / "meta.json", config, "simulate", {"n": data.n, "p": data.p, "q": data.q})
    print(f"wrote {out / 'data.csv'} and {out / 'truth.json'}")


def cmd_benchmark(config):
    out = _out_dir(config)
    methods = config.method_specs()
    report = run_replicates(config.simulation_config(), methods, config.n_replicates,
                            config.tuning(), config.seed, config.solver_options(),
                            config.bic_constant)
    write_report(out / "report.csv", report)
    write_replicates(out / "replicates.csv", report)
    (out / "report.txt").write_text(report.render() + "\n", encoding="utf-8")
    write_meta(out / "meta.json", config, "benchmark",
               {"failures": report.failures, "n_replicates": report.n_replicates})
    print(report.render())


COMMANDS = {"fit": cmd_fit, "screen": cmd_screen, "simulate": cmd_simulate,
            "benchmark": cmd_benchmark}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        COMMANDS[args.command](config)
    except INPUT_ERRORS as exc:
        print(f"gecer {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SelectionError as exc:
        print(f"gecer {args.command}: no converged fit: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConditioningError, RankDeficiencyError) as exc:
        print(f"gecer {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"gecer {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
