"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Shared flags (``--seed``, ``--reps``, ``--workers``, ``--model``, ``--out``,
``--kernel``, ``--bandwidth``, ``--alpha``, ``--mc-draws``) may appear
before or after the subcommand.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import harness as hs
from .asymptotics import gamma_u_stat, gamma_v_stat
from .deptest import TestGrid, report_to_json, run_test, summary_row, SUMMARY_FIELDS
from .estimators import async_cover, u_async_stat, u_stat, v_stat, vprime_stat
from .longspan import HacConfig, daily_blocks, write_blocks_csv
from .simkit import SamplePath, SimGrid, simulate_async_paths, simulate_paths, stream

log = logging.getLogger("rjlt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

GLOBAL_DEFAULTS = dict(
    seed=0,
    reps=None,
    workers=1,
    model=None,
    out=".",
    kernel="bartlett",
    bandwidth=None,
    alpha=0.05,
    mc_draws=100_000,
    verbose=False,
)


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _shared() -> argparse.ArgumentParser:
    p = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("shared options")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--reps", type=int, help="Monte Carlo replications")
    g.add_argument("--workers", type=int, help="worker processes (default 1)")
    g.add_argument("--model", help="preset ex1..ex4 or a model file (default ex1; ex4 for table5)")
    g.add_argument("--out", help="output directory (default .)")
    g.add_argument("--kernel", choices=["bartlett", "parzen"], help="HAC kernel")
    g.add_argument("--bandwidth", type=int, help="HAC bandwidth (default floor(1.2 T^(1/3)))")
    g.add_argument("--alpha", type=float, help="test level / 1 - CI coverage (default 0.05)")
    g.add_argument("--mc-draws", type=int, dest="mc_draws", help="mixture draws (default 100000)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared()
    p = _Parser(prog="rjlt", description=__doc__.splitlines()[0], parents=[shared])
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[shared], help="simulate a path pair to CSV")
    s.add_argument("--n-steps", type=int, default=1760, help="increments over the span")
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--days", type=int, help="simulate whole days instead (AR(1) models)")
    s.add_argument("--steps-per-day", type=int, default=390)
    s.add_argument("--poisson", action="store_true", help="Poisson sampling times, one file per series")

    s = sub.add_parser("estimate", parents=[shared], help="RJLT values, optionally with confidence intervals")
    s.add_argument("paths", nargs="?", help="CSV with columns time,x,y")
    s.add_argument("--x-file", help="CSV time,value for X (asynchronous input)")
    s.add_argument("--y-file", help="CSV time,value for Y (asynchronous input)")
    s.add_argument("--point", action="append", default=None, help="u,v (repeatable; default the 3x3 table grid)")
    s.add_argument("--kinds", default="V,U,Vprime", help="comma list of V,U,Vprime,Uasync")
    s.add_argument("--with-ci", action="store_true", help="add plug-in confidence intervals (V and U)")

    s = sub.add_parser("blocks", parents=[shared], help="daily block statistics to CSV")
    s.add_argument("paths", help="CSV with columns time,x,y on whole unit days")
    s.add_argument("--no-cross-day", action="store_true", help="drop pairs straddling a day boundary")

    s = sub.add_parser("test", parents=[shared], help="dependence test of one pair")
    s.add_argument("paths", help="CSV with columns time,x,y on whole unit days")
    s.add_argument("--no-cross-day", action="store_true", help="drop pairs straddling a day boundary")

    s = sub.add_parser("mc", parents=[shared], help="Monte Carlo experiments")
    s.add_argument("experiment", choices=["table1", "table5", "table6", "studentized"])
    s.add_argument("--n-steps", type=int, default=1760)
    s.add_argument("--point", action="append", default=None, help="u,v (repeatable)")
    s.add_argument("--kinds", default="V,U,Vprime", help="estimators for table1")
    s.add_argument("--rho-primes", default="0,0.2,0.5,-0.5,0.8", help="table5 innovation correlations")
    s.add_argument("--scenarios", default="22:390,44:390,44:780,66:780", help="table5 days:steps list")
    s.add_argument("--alphas", default="0.05,0.10", help="table5 levels")
    s.add_argument("--same-times", action="store_true", help="table6: observe Y at the X times")
    s.add_argument("--cover", choices=["same", "next"], default="same", help="table6 cover rule")
    s.add_argument("--samples", action="store_true", help="also write per-replication errors")

    s = sub.add_parser("hist", parents=[shared], help="histogram of a sample column")
    s.add_argument("samples", help="CSV file")
    s.add_argument("--column", help="column name (default: last column)")
    s.add_argument("--bins", type=int, default=50)
    s.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))

    s = sub.add_parser("pairwise", parents=[shared], help="p-value matrix over a directory of tick CSVs")
    s.add_argument("directory")
    s.add_argument("--steps-per-day", type=int, default=390)
    s.add_argument("--rescale", type=float, default=15.0, help="log-return multiplier")
    s.add_argument("--min-days", type=int, default=5)
    return p


# -- helpers ------------------------------------------------------------------


def _points(specs):
    if not specs:
        return hs.TABLE1_POINTS
    out = []
    for s in specs:
        try:
            u, v = (float(t) for t in s.split(","))
        except ValueError:
            raise UsageError(f"bad point {s!r}; expected u,v") from None
        out.append((u, v))
    return tuple(out)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def _hac(a) -> HacConfig:
    return HacConfig(kernel=a.kernel, bandwidth=a.bandwidth)


def _outdir(a) -> Path:
    d = Path(a.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read_columns(path: str | Path, names: tuple[str, ...]) -> list[np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise hs.DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [n for n in names if n not in (reader.fieldnames or [])]
        if missing:
            raise hs.DataError(f"{path}: missing columns {missing}")
        cols = [[] for _ in names]
        for row in reader:
            for c, n in zip(cols, names):
                try:
                    c.append(float(row[n]))
                except (TypeError, ValueError):
                    raise hs.DataError(f"{path} line {reader.line_num}: bad value in column {n}") from None
    return [np.array(c) for c in cols]


def _read_pair(path) -> tuple[SamplePath, SamplePath]:
    t, x, y = _read_columns(path, ("time", "x", "y"))
    try:
        return SamplePath(t, x), SamplePath(t, y)
    except ValueError as exc:
        raise hs.DataError(f"{path}: {exc}") from None


def _write_pair(path: Path, x: SamplePath, y: SamplePath, vol=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if vol is None:
            w.writerow(["time", "x", "y"])
            for row in zip(x.times, x.values, y.values):
                w.writerow([repr(float(c)) for c in row])
        else:
            w.writerow(["time", "x", "y", "sigma_x", "sigma_y"])
            for row in zip(x.times, x.values, y.values, vol.sigma_x, vol.sigma_y):
                w.writerow([repr(float(c)) for c in row])


def _write_series(path: Path, s: SamplePath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        for t, v in zip(s.times, s.values):
            w.writerow([repr(float(t)), repr(float(v))])


def _done(path: Path) -> None:
    print(path)


# -- commands -----------------------------------------------------------------


def cmd_simulate(a) -> int:
    model = hs.resolve_model(a.model or "ex1")
    rng = stream(a.seed, 0)
    out = _outdir(a)
    if a.poisson:
        x, y, _ = simulate_async_paths(model, a.t_end, float(a.n_steps), float(a.n_steps), rng)
        _write_series(out / "paths_x.csv", x)
        _write_series(out / "paths_y.csv", y)
        _done(out / "paths_x.csv")
        _done(out / "paths_y.csv")
        return EXIT_OK
    grid = SimGrid.daily(a.days, a.steps_per_day) if a.days else SimGrid(a.t_end, a.n_steps)
    x, y, vol = simulate_paths(model, grid, rng)
    _write_pair(out / "paths.csv", x, y, vol)
    _done(out / "paths.csv")
    return EXIT_OK


_SYNC = {"V": v_stat, "U": u_stat, "Vprime": vprime_stat}


def cmd_estimate(a) -> int:
    kinds = [k.strip() for k in a.kinds.split(",") if k.strip()]
    bad = set(kinds) - {"V", "U", "Vprime", "Uasync"}
    if bad:
        raise UsageError(f"unknown estimator kinds {sorted(bad)}")
    pts = _points(a.point)
    rows = []
    zq = norm.ppf(1.0 - a.alpha / 2.0)
    if "Uasync" in kinds:
        if not (a.x_file and a.y_file):
            raise UsageError("Uasync needs --x-file and --y-file")
        tx, vx = _read_columns(a.x_file, ("time", "value"))
        ty, vy = _read_columns(a.y_file, ("time", "value"))
        try:
            x, y = SamplePath(tx, vx), SamplePath(ty, vy)
            cv = async_cover(x.times, y.times)
        except ValueError as exc:
            raise hs.DataError(str(exc)) from None
        for u, v in pts:
            rows.append(["Uasync", u, v, u_async_stat(x, y, u, v, cv=cv), None])
        kinds = [k for k in kinds if k != "Uasync"]
    if kinds:
        if not a.paths:
            raise UsageError("synchronous estimators need a paths file")
        x, y = _read_pair(a.paths)
        dx, dy = x.increments, y.increments
        dt = float(np.mean(np.diff(x.times)))
        if len(dx) < 4 or np.max(np.abs(np.diff(x.times) - dt)) > 1e-6 * dt:
            raise hs.DataError("synchronous estimators need at least 4 increments on a uniform grid")
        for k in kinds:
            for u, v in pts:
                g = None
                if a.with_ci and k == "V":
                    g = gamma_v_stat(dx, dy, dt, (u, v), (u, v))
                elif a.with_ci and k == "U":
                    g = gamma_u_stat(dx, dy, dt, (u, v), (u, v))
                rows.append([k, u, v, _SYNC[k](dx, dy, dt, u, v), g if g is not None else None, dt])
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ["kind", "u", "v", "value"] + (["gamma", "ci_low", "ci_high"] if a.with_ci else [])
    w.writerow(header)
    n_gamma = n_bad = 0
    for r in rows:
        kind, u, v, val, g = r[:5]
        line = [kind, repr(u), repr(v), repr(float(val))]
        if a.with_ci:
            if g is None:
                line += ["", "", ""]
            else:
                n_gamma += 1
                if not g > 0:
                    n_bad += 1
                    line += [repr(g), "", ""]
                else:
                    half = zq * np.sqrt(r[5] * g)
                    line += [repr(g), repr(float(val - half)), repr(float(val + half))]
        w.writerow(line)
    if a.with_ci and n_gamma and n_bad == n_gamma:
        raise NumericalFailure("plug-in variance is non-positive at every point")
    return EXIT_OK


def cmd_blocks(a) -> int:
    x, y = _read_pair(a.paths)
    try:
        blocks = daily_blocks(x, y, TestGrid.default().points, cross_day_pairs=not a.no_cross_day)
    except ValueError as exc:
        raise hs.DataError(str(exc)) from None
    out = _outdir(a) / "blocks.csv"
    with open(out, "w", newline="") as fh:
        write_blocks_csv(blocks, fh)
    _done(out)
    return EXIT_OK


def cmd_test(a) -> int:
    x, y = _read_pair(a.paths)
    try:
        daily_blocks(x, y, [(0.1, 0.1)])
    except ValueError as exc:
        raise hs.DataError(str(exc)) from None
    rep = run_test(
        x, y, _hac(a), a.alpha, a.mc_draws, stream(a.seed, 0), cross_day_pairs=not a.no_cross_day, seed=a.seed
    )
    out = _outdir(a) / "report.json"
    out.write_text(report_to_json(rep))
    sys.stdout.write(",".join(SUMMARY_FIELDS) + "\n" + summary_row(rep, Path(a.paths).stem))
    if rep.degenerate:
        raise NumericalFailure("limiting covariance has no positive eigenvalue")
    return EXIT_OK


def cmd_mc(a) -> int:
    out = _outdir(a)
    kw = dict(master_seed=a.seed, workers=a.workers)
    if a.reps is not None:
        kw["n_reps"] = a.reps
    if a.experiment == "table5":
        cfg = hs.McConfig(dgp=a.model or "ex4", **kw)
        scen = []
        for s in a.scenarios.split(","):
            try:
                d, m = s.split(":")
                scen.append((int(d), int(m)))
            except ValueError:
                raise UsageError(f"bad scenario {s!r}; expected days:steps") from None
        rows = hs.run_table5(cfg, _floats(a.rho_primes), scen, _floats(a.alphas), _hac(a), a.mc_draws)
        path = out / "table5.csv"
        with open(path, "w", newline="") as fh:
            hs.write_rows_csv(rows, fh)
        _done(path)
        return EXIT_OK

    pts = _points(a.point)
    if a.experiment == "table6":
        cfg = hs.McConfig(
            dgp=a.model or "ex1", n_steps=a.n_steps, laplace_points=pts, estimator_kinds=("Uasync",),
            async_same_times=a.same_times, async_cover=a.cover, **kw,
        )
        errs = hs.table6_errors(cfg)
    elif a.experiment == "table1":
        kinds = tuple(k.strip() for k in a.kinds.split(",") if k.strip())
        cfg = hs.McConfig(dgp=a.model or "ex1", n_steps=a.n_steps, laplace_points=pts, estimator_kinds=kinds, **kw)
        errs = hs.table1_errors(cfg)
    else:
        if not a.point:
            pts = ((3.5, 3.75),)
        cfg = hs.McConfig(dgp=a.model or "ex1", n_steps=a.n_steps, laplace_points=pts, estimator_kinds=("V", "U"), **kw)
        z, flagged = hs.studentized_samples(cfg)
        path = out / "studentized.csv"
        _write_samples(path, z, cfg, flagged)
        _done(path)
        if flagged.all():
            raise NumericalFailure("plug-in variance is non-positive in every replication")
        return EXIT_OK
    rows = hs.aggregate(errs, cfg)
    path = out / f"{a.experiment}.csv"
    with open(path, "w", newline="") as fh:
        hs.write_rows_csv(rows, fh)
    _done(path)
    if a.samples:
        spath = out / f"{a.experiment}_samples.csv"
        _write_samples(spath, errs, cfg)
        _done(spath)
    return EXIT_OK


def _write_samples(path: Path, arr: np.ndarray, cfg: hs.McConfig, flagged=None) -> None:
    """Long format: rep, kind, u, v, value (and flagged)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "kind", "u", "v", "value"] + (["flagged"] if flagged is not None else []))
        for r in range(arr.shape[0]):
            for k, kind in enumerate(cfg.estimator_kinds):
                for j, p in enumerate(cfg.laplace_points):
                    row = [r, kind, repr(p.u), repr(p.v), repr(float(arr[r, k, j]))]
                    if flagged is not None:
                        row.append(int(flagged[r, k, j]))
                    w.writerow(row)


def cmd_hist(a) -> int:
    path = Path(a.samples)
    if not path.is_file():
        raise hs.DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        col = a.column or (reader.fieldnames or [None])[-1]
        if col is None or col not in (reader.fieldnames or []):
            raise hs.DataError(f"{path}: no column {col!r}")
        try:
            vals = np.array([float(r[col]) for r in reader])
        except ValueError:
            raise hs.DataError(f"{path}: non-numeric value in column {col!r}") from None
    if vals.size == 0:
        raise hs.DataError(f"{path}: no samples")
    rng = tuple(a.range) if a.range else (float(vals.min()), float(vals.max()))
    if not rng[1] > rng[0]:
        raise UsageError("histogram range must be increasing")
    rows = hs.emit_histogram(vals, a.bins, rng)
    out = _outdir(a) / f"{path.stem}_hist.csv"
    with open(out, "w", newline="") as fh:
        hs.write_rows_csv(rows, fh)
    _done(out)
    return EXIT_OK


def cmd_pairwise(a) -> int:
    d = Path(a.directory)
    if not d.is_dir():
        raise hs.DataError(f"{d}: not a directory")
    files = sorted(d.glob("*.csv"))
    if len(files) < 2:
        raise hs.DataError(f"{d}: need at least two CSV files")
    series = [hs.ingest_csv(f, a.rescale) for f in files]
    cfg = hs.PairwiseConfig(
        steps_per_day=a.steps_per_day, hac=_hac(a), alpha=a.alpha, mc_draws=a.mc_draws,
        master_seed=a.seed, min_days=a.min_days, workers=a.workers,
    )
    res = hs.pairwise_test_matrix(series, cfg)
    out = _outdir(a)
    with open(out / "pvalues.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(res.matrix_rows())
    with open(out / "pairs.csv", "w", newline="") as fh:
        fh.write(",".join(SUMMARY_FIELDS) + "\n")
        for pr in res.pairs:
            if pr.report is not None:
                fh.write(summary_row(pr.report, f"{pr.symbol_i}/{pr.symbol_j}"))
    _done(out / "pvalues.csv")
    _done(out / "pairs.csv")
    if all(pr.report is None for pr in res.pairs):
        raise hs.DataError("no pair had enough common sessions")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "blocks": cmd_blocks,
    "test": cmd_test,
    "mc": cmd_mc,
    "hist": cmd_hist,
    "pairwise": cmd_pairwise,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        for k, v in GLOBAL_DEFAULTS.items():
            if not hasattr(a, k):
                setattr(a, k, v)
        if a.workers < 1:
            raise UsageError("--workers must be >= 1")
        if a.reps is not None and a.reps < 1:
            raise UsageError("--reps must be >= 1")
        if not 0 < a.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        if a.bandwidth is not None and a.bandwidth < 0:
            raise UsageError("--bandwidth must be >= 0")
    except UsageError as exc:
        print(f"rjlt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"rjlt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except hs.DataError as exc:
        print(f"rjlt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"rjlt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"rjlt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"rjlt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
