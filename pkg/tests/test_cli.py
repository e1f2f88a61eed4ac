import csv
import json
import math

import numpy as np
import pytest

from rjlt import cli
from rjlt import simkit as sk
from rjlt.models import preset, save_model


def _run(*args):
    return cli.main([str(a) for a in args])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _flat_paths(path, n_days=6, m=20):
    t = np.arange(n_days * m + 1) / m
    with open(path, "w") as fh:
        fh.write("time,x,y\n")
        for ti in t:
            fh.write(f"{float(ti)!r},1.0,2.0\n")


@pytest.fixture(scope="module")
def daily_paths(tmp_path_factory):
    d = tmp_path_factory.mktemp("daily")
    assert _run("simulate", "--model", "ex4", "--days", 22, "--steps-per-day", 78, "--seed", 4, "--out", d) == 0
    return d / "paths.csv"


class TestSimulate:
    def test_uniform(self, tmp_path):
        assert _run("--seed", 1, "simulate", "--n-steps", 100, "--out", tmp_path) == 0
        rows = _rows(tmp_path / "paths.csv")
        assert len(rows) == 101
        assert list(rows[0]) == ["time", "x", "y", "sigma_x", "sigma_y"]
        assert float(rows[-1]["time"]) == pytest.approx(1.0)

    def test_seed_reproducible(self, tmp_path):
        for d in ("a", "b"):
            assert _run("simulate", "--n-steps", 50, "--seed", 7, "--out", tmp_path / d) == 0
        assert (tmp_path / "a/paths.csv").read_bytes() == (tmp_path / "b/paths.csv").read_bytes()

    def test_poisson(self, tmp_path):
        assert _run("simulate", "--poisson", "--n-steps", 200, "--out", tmp_path) == 0
        assert len(_rows(tmp_path / "paths_x.csv")) > 100
        assert list(_rows(tmp_path / "paths_y.csv")[0]) == ["time", "value"]

    def test_model_file(self, tmp_path):
        f = tmp_path / "m.toml"
        save_model(preset("ex3"), f)
        assert _run("simulate", "--model", f, "--n-steps", 30, "--out", tmp_path) == 0

    def test_bad_model_is_usage_error(self, tmp_path):
        assert _run("simulate", "--model", "ex9", "--out", tmp_path) == 1


class TestEstimate:
    def test_values_and_ci(self, tmp_path, capsys):
        _run("simulate", "--n-steps", 400, "--out", tmp_path)
        capsys.readouterr()
        assert _run("estimate", tmp_path / "paths.csv", "--point", "2.5,2.75", "--kinds", "V,U", "--with-ci") == 0
        out = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert [r["kind"] for r in out] == ["V", "U"]
        for r in out:
            v, lo, hi = float(r["value"]), float(r["ci_low"]), float(r["ci_high"])
            half = 1.959963984540054 * math.sqrt(float(r["gamma"]) / 400)
            assert lo == pytest.approx(v - half) and hi == pytest.approx(v + half)

    def test_async(self, tmp_path, capsys):
        _run("simulate", "--poisson", "--n-steps", 300, "--out", tmp_path)
        capsys.readouterr()
        code = _run(
            "estimate", "--x-file", tmp_path / "paths_x.csv", "--y-file", tmp_path / "paths_y.csv", "--kinds", "Uasync", "--point", "1,1"
        )
        assert code == 0
        out = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert out[0]["kind"] == "Uasync" and abs(float(out[0]["value"])) <= 1.01

    def test_flat_path_is_numerical_failure(self, tmp_path):
        _flat_paths(tmp_path / "flat.csv")
        assert _run("estimate", tmp_path / "flat.csv", "--kinds", "V,U", "--with-ci") == 3

    @pytest.mark.parametrize("extra", [["--kinds", "W"], ["--point", "1;2"], ["--kinds", "Uasync"]])
    def test_usage_errors(self, tmp_path, extra):
        _flat_paths(tmp_path / "flat.csv")
        assert _run("estimate", tmp_path / "flat.csv", *extra) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        assert _run("estimate", tmp_path / "nope.csv") == 2

    def test_bad_columns_is_data_error(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("t,a,b\n0,1,2\n")
        assert _run("estimate", f) == 2


class TestBlocksAndTest:
    def test_blocks(self, daily_paths, tmp_path):
        assert _run("blocks", daily_paths, "--out", tmp_path) == 0
        rows = _rows(tmp_path / "blocks.csv")
        assert len(rows) == 22 * 100

    def test_report(self, daily_paths, tmp_path, capsys):
        assert _run("test", daily_paths, "--mc-draws", 20000, "--seed", 3, "--out", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["bandwidth"] == 3 and rep["mc_draws"] == 20000 and rep["seed"] == 3
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "pair_id,statistic,d_alpha,p_value,n_discarded"
        assert float(lines[1].split(",")[3]) == rep["p_value"]

    def test_flags_after_subcommand_and_before(self, daily_paths, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run("--seed", 5, "--kernel", "parzen", "test", daily_paths, "--mc-draws", 10000, "--out", a) == 0
        assert _run("test", daily_paths, "--seed", 5, "--kernel", "parzen", "--mc-draws", 10000, "--out", b) == 0
        assert (a / "report.json").read_text() == (b / "report.json").read_text()
        assert json.loads((a / "report.json").read_text())["kernel"] == "parzen"

    def test_degenerate_spectrum(self, tmp_path):
        # without cross-day pairs every block is constant, so the covariance vanishes
        _flat_paths(tmp_path / "flat.csv")
        assert _run("test", tmp_path / "flat.csv", "--no-cross-day", "--mc-draws", 10000, "--out", tmp_path) == 3

    def test_partial_day_is_data_error(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("time,x,y\n" + "".join(f"{i / 10!r},0,0\n" for i in range(26)))
        assert _run("test", f, "--out", tmp_path) == 2

    @pytest.mark.parametrize("args", [["--alpha", "1.5"], ["--mc-draws", "100"], ["--bandwidth", "-2"], ["--kernel", "box"]])
    def test_usage(self, daily_paths, tmp_path, args):
        assert _run("test", daily_paths, "--out", tmp_path, *args) == 1


class TestMc:
    def test_table1_deterministic_across_workers(self, tmp_path):
        common = ["mc", "table1", "--reps", 6, "--n-steps", 200, "--seed", 2]
        assert _run(*common, "--out", tmp_path / "a") == 0
        assert _run(*common, "--workers", 2, "--out", tmp_path / "b") == 0
        assert (tmp_path / "a/table1.csv").read_bytes() == (tmp_path / "b/table1.csv").read_bytes()
        assert len(_rows(tmp_path / "a/table1.csv")) == 27

    def test_table6_and_samples(self, tmp_path):
        assert _run("mc", "table6", "--reps", 3, "--n-steps", 200, "--point", "2.5,2.75", "--samples", "--out", tmp_path) == 0
        assert len(_rows(tmp_path / "table6.csv")) == 1
        assert len(_rows(tmp_path / "table6_samples.csv")) == 3

    def test_studentized_then_hist(self, tmp_path):
        assert _run("mc", "studentized", "--reps", 20, "--n-steps", 200, "--out", tmp_path) == 0
        assert _run("hist", tmp_path / "studentized.csv", "--column", "value", "--bins", 8, "--range", -4, 4, "--out", tmp_path) == 0
        rows = _rows(tmp_path / "studentized_hist.csv")
        assert len(rows) == 8
        assert sum(int(r["count"]) for r in rows) <= 40

    def test_table5(self, tmp_path):
        code = _run(
            "mc", "table5", "--reps", 2, "--rho-primes", "0,0.8", "--scenarios", "22:39", "--mc-draws", 10000, "--out", tmp_path
        )
        assert code == 0
        rows = _rows(tmp_path / "table5.csv")
        assert [(r["rho_prime"], r["alpha"]) for r in rows] == [("0.0", "0.05"), ("0.0", "0.1"), ("0.8", "0.05"), ("0.8", "0.1")]

    @pytest.mark.parametrize(
        "args",
        [["table5", "--scenarios", "22-390"], ["table1", "--kinds", "Q"], ["table1", "--model", "ex4"], ["table9"], ["table1", "--reps", "0"]],
    )
    def test_usage(self, tmp_path, args):
        assert _run("mc", *args, "--out", tmp_path) == 1


class TestHistAndPairwise:
    def test_hist_errors(self, tmp_path):
        assert _run("hist", tmp_path / "missing.csv") == 2
        f = tmp_path / "s.csv"
        f.write_text("value\n1\nx\n")
        assert _run("hist", f, "--out", tmp_path) == 2

    def test_pairwise(self, tmp_path):
        data = tmp_path / "ticks"
        data.mkdir()
        for k, name in enumerate(["AAA", "BBB", "CCC"]):
            x, _, _ = sk.simulate_paths(preset("ex4"), sk.SimGrid.daily(10, 39), sk.stream(k))
            with open(data / f"{name}.csv", "w") as fh:
                fh.write("timestamp,price\n")
                for d in range(10):
                    ts = np.linspace(d, d + 0.25, 40)
                    for t, v in zip(ts, x.values[39 * d : 39 * d + 40]):
                        fh.write(f"{float(t)!r},{float(np.exp(v / 15))!r}\n")
        out = tmp_path / "out"
        assert _run("pairwise", data, "--steps-per-day", 39, "--mc-draws", 10000, "--out", out) == 0
        m = list(csv.reader(open(out / "pvalues.csv")))
        assert m[0] == ["", "AAA", "BBB", "CCC"]
        assert m[1][2] and m[1][3] and m[2][3] and not m[2][1]
        assert len(_rows(out / "pairs.csv")) == 3

    def test_pairwise_errors(self, tmp_path):
        assert _run("pairwise", tmp_path / "none") == 2
        (tmp_path / "one.csv").write_text("timestamp,price\n0.1,1\n0.2,2\n")
        assert _run("pairwise", tmp_path) == 2

    def test_no_command(self):
        assert _run() == 1
