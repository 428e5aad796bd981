import csv
import json
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gecer import ConfigError, Dataset, ExpectileGrid
from gecer.cli import EXIT_CONVERGENCE, EXIT_INPUT, EXIT_OK, main
from gecer.dataio import (
    ColumnSpec,
    RunConfig,
    column_spec_for,
    fmt,
    load_csv,
    marginal_screen,
    parse_method,
    read_coefficients,
    read_csv,
    read_truth,
    toy_csv_path,
    write_csv,
)
from gecer.errors import DataFormatError

TOY_ARGS = ["--csv", str(toy_csv_path()), "--e-columns", "e1,e2,e3"]
SMALL_GRID = ["--lambda1", "0.5,1", "--lambda2", "0.5,1"]


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---- CSV ingestion ----

def test_three_row_file(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1,x2\n1,0,1,2\n2,1,3,4\n3,0,5,7\n")
    data = load_csv(path, ColumnSpec("y", ("z1",), ("x1", "x2")))
    assert (data.n, data.q, data.p) == (3, 1, 2)
    np.testing.assert_array_equal(data.x[:, 1], [2, 4, 7])
    assert data.x_names == ("x1", "x2") and data.z_names == ("z1",)


def test_missing_column_is_named(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1\n1,0,1\n")
    with pytest.raises(DataFormatError, match="'x9'"):
        load_csv(path, ColumnSpec("y", ("z1",), ("x1", "x9")))


def test_zero_variance_column(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1,x2\n1,0,1,5\n2,1,3,5\n3,0,5,5\n")
    with pytest.raises(DataFormatError, match="zero variance column"):
        load_csv(path, ColumnSpec("y", ("z1",)), standardize=True)


def test_standardize(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1\n1,0,1\n2,1,3\n3,0,8\n")
    data = load_csv(path, ColumnSpec("y", ("z1",)), standardize=True)
    assert data.x.mean() == pytest.approx(0, abs=1e-15)
    assert data.x.std() == pytest.approx(1, abs=1e-15)


def test_parse_errors_are_located(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1\n1,0,1\n2,abc,3\n")
    with pytest.raises(DataFormatError, match=r"line 3, column 'z1'"):
        load_csv(path, ColumnSpec("y", ("z1",)))


def test_missing_rows_rejected_with_count(tmp_path):
    path = write_text(tmp_path / "d.csv", "y,z1,x1\n1,0,1\n2,,3\nNA,1,2\n4,1,1\n")
    data, dropped = read_csv(path, ColumnSpec("y", ("z1",)))
    assert dropped == 2 and data.n == 2
    np.testing.assert_array_equal(data.y, [1, 4])


def test_overlapping_columns_rejected():
    with pytest.raises(ConfigError):
        ColumnSpec("y", ("y",))


@settings(max_examples=25)
@given(st.integers(1, 8), st.integers(0, 3), st.integers(0, 4), st.integers(0, 2 ** 31))
def test_csv_round_trip_is_exact(n, q, p, seed):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.normal(size=n) * 10.0 ** rng.integers(-200, 200, n),
                   rng.normal(size=(n, q)), rng.standard_cauchy(size=(n, p)))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "d.csv"
        write_csv(data, path)
        back = load_csv(path, column_spec_for(data))
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.z, data.z)
    np.testing.assert_array_equal(back.x, data.x)
    assert back.x_names == data.x_names


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e300, 123456789.123456789):
        assert float(fmt(v)) == v


# ---- screening ----

def screen_data():
    rng = np.random.default_rng(0)
    n = 50
    z = rng.normal(size=(n, 1))
    x = rng.normal(size=(n, 5))
    y = z[:, 0] + 0.3 * rng.normal(size=n)
    x[:, 3] = y
    return Dataset(y, z, x)


def test_screen_keeps_perfect_predictor():
    reduced, report = marginal_screen(screen_data(), 1, ExpectileGrid.equally_spaced(3))
    assert reduced.x_names == ("g4",) and report[0][:3] == (1, "g4", 3)


def test_screen_keep_all_is_identity():
    data = screen_data()
    reduced, report = marginal_screen(data, data.p, 3)
    assert reduced.x_names == data.x_names
    np.testing.assert_array_equal(reduced.x, data.x)
    assert sorted(r[2] for r in report) == list(range(data.p))


def test_screen_tie_goes_to_earlier_column():
    data = screen_data()
    x = data.x.copy()
    x[:, 1] = x[:, 3]
    data = Dataset(data.y, data.z, x)
    _, report = marginal_screen(data, 2, 3)
    assert [r[2] for r in report] == [1, 3]


def test_screen_preserves_column_identity():
    data = screen_data()
    reduced, report = marginal_screen(data, 3, 3)
    for _, name, j, _ in report:
        col = reduced.x[:, reduced.x_names.index(name)]
        np.testing.assert_array_equal(col, data.x[:, j])


def test_screen_rejects_bad_keep():
    with pytest.raises(ConfigError):
        marginal_screen(screen_data(), 0, 3)


# ---- run configuration ----

def test_config_round_trip(tmp_path):
    cfg = RunConfig(csv="a.csv", e_columns=("e1", "e2"), g_columns=("g1",), standardize=True,
                    mode="cer-nonhier", taus=(0.2, 0.8), lambda1=(0.1, 0.3), r=2.5,
                    rel_tolerance=1e-6, methods=("er:0.5", "cer"), seed=17)
    cfg.save(tmp_path / "run.ini")
    back = RunConfig.load(tmp_path / "run.ini")
    assert back == cfg and back.digest() == cfg.digest()
    assert RunConfig.from_ini(RunConfig().to_ini()) == RunConfig()


@pytest.mark.parametrize("text, field", [
    ("[tuning]\nr = 0.5\n", "r"),
    ("[model]\nmode = lasso\n", "mode"),
    ("[simulation]\nn_replicates = 0\n", "n_replicates"),
    ("[solver]\nmax_outer_iterations = ten\n", "max_outer_iterations"),
    ("[model]\nbogus = 1\n", "bogus"),
    ("[simulation]\nmethods = er:0.5, svm\n", "methods"),
])
def test_bad_config_names_field(text, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_ini(text)


def test_parse_method():
    assert parse_method("er:0.25").name == "ER(tau=0.25)"
    assert parse_method("cer", 19).grid.L == 19
    assert parse_method("cer-nonhier").mode == "non-hierarchical"
    with pytest.raises(ConfigError):
        parse_method("er:abc")


# ---- command line ----

def run(argv, capsys=None):
    code = main(argv)
    if capsys is not None:
        return code, capsys.readouterr()
    return code


def test_cli_fit_outputs(tmp_path, capsys):
    out = tmp_path / "fit"
    code, _ = run(["fit", *TOY_ARGS, *SMALL_GRID, "--out", str(out)], capsys)
    assert code == EXIT_OK
    header, alpha, genes = read_coefficients(out / "coefficients.csv")
    assert header == ["gene", "main", "e1", "e2", "e3"]
    assert len(alpha) == 3 and genes
    with open(out / "bic_table.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 4
    meta = json.loads((out / "meta.json").read_text())
    assert meta["command"] == "fit" and len(meta["config_sha256"]) == 64
    assert set(meta["versions"]) >= {"numpy", "scipy", "gecer"}


def test_cli_fit_is_byte_identical_on_rerun(tmp_path):
    out = tmp_path / "fit"
    argv = ["fit", *TOY_ARGS, *SMALL_GRID, "--seed", "3", "--resamples", "2", "--screen", "5",
            "--out", str(out)]
    names = ("coefficients.csv", "bic_table.csv", "resamples.csv", "screen.csv", "meta.json")
    assert run(argv) == EXIT_OK
    first = {name: (out / name).read_bytes() for name in names}
    assert run(argv) == EXIT_OK
    for name in names:
        assert (out / name).read_bytes() == first[name]


def test_cli_fit_modes(tmp_path):
    for mode, extra in (("er", ["--tau", "0.5"]), ("cer-nonhier", ["--levels", "3"])):
        out = tmp_path / mode
        assert run(["fit", *TOY_ARGS, *SMALL_GRID, "--mode", mode, *extra, "--out", str(out)]) == 0
        assert (out / "coefficients.csv").exists()


def test_cli_config_file_and_override(tmp_path):
    cfg = RunConfig(csv=str(toy_csv_path()), e_columns=("e1", "e2", "e3"), lambda1=(1.0,),
                    lambda2=(1.0,), levels=3, out=str(tmp_path / "from_file"))
    cfg.save(tmp_path / "run.ini")
    assert run(["fit", "--config", str(tmp_path / "run.ini")]) == EXIT_OK
    meta = json.loads((tmp_path / "from_file" / "meta.json").read_text())
    assert meta["lambda1"] == 1.0
    out = tmp_path / "override"
    assert run(["fit", "--config", str(tmp_path / "run.ini"), "--lambda1", "2",
                "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "meta.json").read_text())["lambda1"] == 2.0


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_text(tmp_path / "bad.ini", "[tuning]\nr = 0.5\n")
    code, io = run(["fit", "--config", str(bad)], capsys)
    assert code == EXIT_INPUT and "r" in io.err
    code, io = run(["fit", "--csv", str(tmp_path / "nope.csv"), "--out", str(tmp_path)], capsys)
    assert code == EXIT_INPUT
    code, io = run(["fit", *TOY_ARGS, "--g-columns", "g1,g99", "--out", str(tmp_path)], capsys)
    assert code == EXIT_INPUT and "g99" in io.err
    code, io = run(["fit", *TOY_ARGS, "--max-iter", "1", "--lambda1", "0.1", "--lambda2", "0.1",
                    "--out", str(tmp_path)], capsys)
    assert code == EXIT_CONVERGENCE
    code, io = run(["benchmark", "--replicates", "0", "--out", str(tmp_path)], capsys)
    assert code == EXIT_INPUT and "n_replicates" in io.err


def test_cli_screen(tmp_path):
    out = tmp_path / "screen"
    assert run(["screen", *TOY_ARGS, "--keep", "4", "--levels", "3", "--out", str(out)]) == 0
    with open(out / "screen.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["rank"] for r in rows] == ["1", "2", "3", "4"]
    data = load_csv(out / "screened.csv", ColumnSpec("y", ("e1", "e2", "e3")))
    assert set(data.x_names) == {r["name"] for r in rows}


def test_cli_simulate(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--n", "50", "--p", "25", "--seed", "4", "--out", str(out)]) == 0
    truth = read_truth(out / "truth.json")
    assert np.all(truth.eta0[:, truth.beta0 == 0] == 0)
    data = load_csv(out / "data.csv", ColumnSpec("y", ("e1", "e2", "e3", "e4", "e5")))
    assert (data.n, data.p) == (50, 25)


def test_cli_benchmark_seven_methods(tmp_path):
    out = tmp_path / "bench"
    argv = ["benchmark", "--n", "40", "--p", "20", "--replicates", "1", "--lambda1", "1",
            "--lambda2", "1", "--levels", "3", "--seed", "2", "--out", str(out)]
    assert run(argv) == EXIT_OK
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == [
        "ER(tau=0.10)", "ER(tau=0.25)", "ER(tau=0.50)", "ER(tau=0.75)", "ER(tau=0.90)",
        "CER", "non-hierarchical CER"]
    assert all("(" in r["AE"] for r in rows)
    assert "Method" in (out / "report.txt").read_text()
