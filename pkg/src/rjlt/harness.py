"""Monte Carlo experiments, tick-data ingestion and the pairwise test matrix.

Every replication draws from its own generator keyed by the master seed and
the replication index (plus a scenario index where several scenarios share a
run), so results do not depend on the number of worker processes or on the
order in which workers finish.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .asymptotics import gamma_u_stat, gamma_v_stat, studentize
from .deptest import TestGrid, TestReport, calibrate, run_test
from .estimators import LaplacePoint, as_point, u_async_stat, u_stat, v_stat, vprime_stat
from .longspan import HacConfig, daily_blocks
from .models import PRESETS, load_model, preset
from .simkit import (
    BivariateModelSpec,
    SamplePath,
    SimGrid,
    simulate_async_paths,
    simulate_paths,
    stream,
    true_elt,
)

__all__ = [
    "DataError",
    "TABLE1_POINTS",
    "TABLE5_SCENARIOS",
    "McConfig",
    "McResultRow",
    "PowerRow",
    "HistRow",
    "TickSeries",
    "IngestDiagnostic",
    "PairwiseConfig",
    "PairResult",
    "PairwiseResult",
    "resolve_model",
    "table1_errors",
    "aggregate",
    "run_table1",
    "studentized_samples",
    "table6_errors",
    "run_table6",
    "table5_pvalues",
    "run_table5",
    "emit_histogram",
    "ingest_csv",
    "write_tick_csv",
    "align_pair",
    "pairwise_test_matrix",
    "write_rows_csv",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data that cannot be used (malformed file, bad prices, no overlap)."""


TABLE1_POINTS: tuple[LaplacePoint, ...] = tuple(
    LaplacePoint(u, v) for u in (2.5, 3.5, 4.5) for v in (2.75, 3.75, 4.75)
)
TABLE5_SCENARIOS: tuple[tuple[int, int], ...] = ((22, 390), (44, 390), (44, 780), (66, 780))
SYNC_KINDS = ("V", "U", "Vprime")


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo experiment.

    ``dgp`` is a preset name (``ex1`` ... ``ex4``) or the path of a model
    file. For the asynchronous experiment ``n_steps`` is the expected number
    of observations of each series; ``async_same_times`` observes Y at the X
    times and ``async_cover`` selects the cover rule of the estimator.
    """

    dgp: str = "ex1"
    n_reps: int = 1000
    n_steps: int = 1760
    t_end: float = 1.0
    laplace_points: tuple[LaplacePoint, ...] = TABLE1_POINTS
    estimator_kinds: tuple[str, ...] = SYNC_KINDS
    master_seed: int = 0
    workers: int = 1
    async_same_times: bool = False
    async_cover: str = "same"

    def __post_init__(self):
        if int(self.n_reps) != self.n_reps or self.n_reps < 1:
            raise ValueError("n_reps must be a positive integer")
        if int(self.n_steps) != self.n_steps or self.n_steps < 4:
            raise ValueError("n_steps must be an integer >= 4")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        bad = set(self.estimator_kinds) - {"V", "U", "Vprime", "Uasync"}
        if bad or not self.estimator_kinds:
            raise ValueError(f"unknown estimator kinds {sorted(bad)}")
        if not self.laplace_points:
            raise ValueError("need at least one Laplace point")
        object.__setattr__(self, "laplace_points", tuple(as_point(p) for p in self.laplace_points))
        object.__setattr__(self, "estimator_kinds", tuple(self.estimator_kinds))

    @property
    def uv(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([p.u for p in self.laplace_points]),
            np.array([p.v for p in self.laplace_points]),
        )


@dataclass(frozen=True)
class McResultRow:
    """Bias, sample SD (``ddof=1``) and MSE of the errors at one point.

    ``mse`` is the mean squared error, so ``mse == bias**2 + sd**2 * (n - 1) / n``.
    With one replication ``sd`` is NaN.
    """

    estimator_kind: str
    u: float
    v: float
    bias: float
    sd: float
    mse: float
    n_reps: int


@dataclass(frozen=True)
class PowerRow:
    rho_prime: float
    n_days: int
    steps_per_day: int
    alpha: float
    rate: float
    n_reps: int
    n_degenerate: int = 0


def resolve_model(dgp: str) -> BivariateModelSpec:
    if dgp in PRESETS:
        return preset(dgp)
    path = Path(dgp)
    if not path.is_file():
        raise ValueError(f"{dgp!r} is neither a preset ({', '.join(PRESETS)}) nor a model file")
    return load_model(path)


# -- parallel map -------------------------------------------------------------


def _chunks(n: int, workers: int) -> list[range]:
    k = max(1, min(n, 4 * workers))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_reps(fn: Callable, args: tuple, n: int, workers: int) -> list:
    """``[fn(*args, r) for r in range(n)]``, optionally across processes, in index order."""
    if workers <= 1 or n == 1:
        return [fn(*args, r) for r in range(n)]
    chunks = _chunks(n, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_chunk, itertools.repeat(fn), itertools.repeat(args), chunks)
        return [x for part in parts for x in part]


def _run_chunk(fn: Callable, args: tuple, idx: range) -> list:
    return [fn(*args, r) for r in idx]


# -- fixed-span tables --------------------------------------------------------

_SYNC_FUNCS = {"V": v_stat, "U": u_stat, "Vprime": vprime_stat}


def _table1_rep(model, cfg: McConfig, r: int) -> np.ndarray:
    rng = stream(cfg.master_seed, r)
    x, y, vol = simulate_paths(model, SimGrid(cfg.t_end, cfg.n_steps), rng)
    u, v = cfg.uv
    truth = true_elt(vol, u, v)
    dx, dy = x.increments, y.increments
    dt = cfg.t_end / cfg.n_steps
    return np.stack([_SYNC_FUNCS[k](dx, dy, dt, u, v) - truth for k in cfg.estimator_kinds])


def table1_errors(cfg: McConfig) -> np.ndarray:
    """Estimation errors, shape ``(n_reps, n_kinds, n_points)``, on a uniform grid."""
    if "Uasync" in cfg.estimator_kinds:
        raise ValueError("the asynchronous estimator belongs to the Poisson-sampling experiment")
    if cfg.dgp in PRESETS and cfg.dgp not in ("ex1", "ex2", "ex3"):
        raise ValueError("the fixed-span table uses ex1, ex2 or ex3")
    model = resolve_model(cfg.dgp)
    return np.array(_map_reps(_table1_rep, (model, cfg), cfg.n_reps, cfg.workers))


def aggregate(errors: np.ndarray, cfg: McConfig) -> list[McResultRow]:
    """Rows in ``(kind, point)`` order from an error array of :func:`table1_errors` shape."""
    n = errors.shape[0]
    bias = errors.mean(axis=0)
    sd = errors.std(axis=0, ddof=1) if n > 1 else np.full(bias.shape, np.nan)
    mse = np.mean(errors * errors, axis=0)
    rows = []
    for k, kind in enumerate(cfg.estimator_kinds):
        for j, p in enumerate(cfg.laplace_points):
            rows.append(McResultRow(kind, p.u, p.v, float(bias[k, j]), float(sd[k, j]), float(mse[k, j]), n))
    return rows


def run_table1(cfg: McConfig) -> list[McResultRow]:
    """Bias, SD and MSE of the synchronous estimators against the per-path target."""
    return aggregate(table1_errors(cfg), cfg)


def _student_rep(model, cfg: McConfig, r: int) -> np.ndarray:
    rng = stream(cfg.master_seed, r)
    x, y, vol = simulate_paths(model, SimGrid(cfg.t_end, cfg.n_steps), rng)
    dx, dy = x.increments, y.increments
    dt = cfg.t_end / cfg.n_steps
    out = np.empty((2, len(cfg.laplace_points), 2))
    for j, p in enumerate(cfg.laplace_points):
        truth = float(true_elt(vol, p.u, p.v))
        sv = studentize(v_stat(dx, dy, dt, p.u, p.v), truth, gamma_v_stat(dx, dy, dt, p, p), dt)
        su = studentize(u_stat(dx, dy, dt, p.u, p.v), truth, gamma_u_stat(dx, dy, dt, p, p), dt)
        out[0, j] = sv.z, sv.flagged
        out[1, j] = su.z, su.flagged
    return out


def studentized_samples(cfg: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Studentized errors of ``V`` and ``U`` per replication and point.

    Returns ``(z, flagged)``, both of shape ``(n_reps, 2, n_points)`` with
    kind order ``(V, U)``; ``flagged`` marks replications whose plug-in
    variance was not positive.
    """
    model = resolve_model(cfg.dgp)
    res = np.array(_map_reps(_student_rep, (model, cfg), cfg.n_reps, cfg.workers))
    return res[..., 0], res[..., 1].astype(bool)


def _table6_rep(model, cfg: McConfig, r: int) -> np.ndarray:
    rng = stream(cfg.master_seed, r)
    mean_y = None if cfg.async_same_times else float(cfg.n_steps)
    x, y, vol = simulate_async_paths(model, cfg.t_end, float(cfg.n_steps), mean_y, rng)
    u, v = cfg.uv
    return u_async_stat(x, y, u, v, cover=cfg.async_cover) - true_elt(vol, u, v)


def table6_errors(cfg: McConfig) -> np.ndarray:
    """Errors of the asynchronous estimator, shape ``(n_reps, 1, n_points)``."""
    if tuple(cfg.estimator_kinds) != ("Uasync",):
        raise ValueError("the Poisson-sampling experiment runs the asynchronous estimator only")
    model = resolve_model(cfg.dgp)
    errs = _map_reps(_table6_rep, (model, cfg), cfg.n_reps, cfg.workers)
    return np.array(errs)[:, None, :]


def run_table6(cfg: McConfig) -> list[McResultRow]:
    """As :func:`run_table1` for Poisson-sampled, non-synchronous observations."""
    return aggregate(table6_errors(cfg), cfg)


# -- long-span size and power -------------------------------------------------


def _table5_rep(model, grid, tg, hac, mc_draws, seed, scenario, r) -> tuple[float, float, int]:
    x, y, _ = simulate_paths(model, grid, stream(seed, scenario, r, 0))
    blocks = daily_blocks(x, y, tg.points)
    stat, mix, draws = calibrate(blocks, hac, mc_draws, stream(seed, scenario, r, 1), tg)
    p = (np.count_nonzero(draws >= stat) + 1.0) / (len(draws) + 1.0)
    return stat, p, int(mix.degenerate)


def table5_pvalues(
    cfg: McConfig,
    rho_prime: float,
    scenario: tuple[int, int],
    scenario_index: int = 0,
    hac: HacConfig = HacConfig(),
    mc_draws: int = 10_000,
    grid: TestGrid | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo p-values and degeneracy flags of the dependence test.

    Replication ``r`` of scenario ``scenario_index`` uses the same random
    streams for every ``rho_prime``, so comparisons across ``rho_prime`` are
    paired.
    """
    model = resolve_model(cfg.dgp)
    if model.ar1 is None:
        raise ValueError("the dependence experiment needs daily AR(1) volatility (ex4)")
    model = dataclasses.replace(model, ar1=dataclasses.replace(model.ar1, rho_prime=rho_prime))
    n_days, m = scenario
    args = (model, SimGrid.daily(n_days, m), grid or TestGrid.default(), hac, mc_draws, cfg.master_seed, scenario_index)
    res = np.array(_map_reps(_table5_rep, args, cfg.n_reps, cfg.workers))
    return res[:, 1], res[:, 2].astype(bool)


def run_table5(
    cfg: McConfig,
    rho_primes: Sequence[float],
    scenarios: Sequence[tuple[int, int]] = TABLE5_SCENARIOS,
    alphas: Sequence[float] = (0.05, 0.10),
    hac: HacConfig = HacConfig(),
    mc_draws: int = 10_000,
) -> list[PowerRow]:
    """Rejection frequencies per ``(scenario, rho_prime, alpha)``.

    A replication rejects at level ``alpha`` when its Monte Carlo p-value is
    at most ``alpha``.
    """
    if cfg.dgp in PRESETS and cfg.dgp != "ex4":
        raise ValueError("the dependence experiment uses ex4")
    for a in alphas:
        if not 0 < a < 1:
            raise ValueError("alpha must lie in (0, 1)")
    rows = []
    for si, sc in enumerate(scenarios):
        for rp in rho_primes:
            p, degen = table5_pvalues(cfg, rp, sc, si, hac, mc_draws)
            for a in alphas:
                rows.append(PowerRow(float(rp), sc[0], sc[1], float(a), float(np.mean(p <= a)), cfg.n_reps, int(degen.sum())))
    return rows


# -- histograms ---------------------------------------------------------------


@dataclass(frozen=True)
class HistRow:
    bin_left: float
    bin_right: float
    count: int
    density: float


def emit_histogram(samples: Iterable[float], n_bins: int, range: tuple[float, float]) -> list[HistRow]:
    """Equal-width histogram with left-closed bins; the last bin also holds its right edge.

    Samples outside ``range`` are not counted. ``density`` is normalised over
    the counted samples, so ``sum(density * width) == 1``.
    """
    x = np.asarray(list(samples), dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    lo, hi = map(float, range)
    if not hi > lo:
        raise ValueError("range must be increasing")
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples inside the range")
    dens = counts / (total * np.diff(edges))
    return [HistRow(float(a), float(b), int(c), float(d)) for a, b, c, d in zip(edges[:-1], edges[1:], counts, dens)]


# -- tick data ---------------------------------------------------------------


@dataclass(frozen=True)
class IngestDiagnostic:
    line: int
    message: str


@dataclass(frozen=True)
class TickSeries:
    """Ticks of one asset.

    ``times`` are in days (fractional), ``session`` is the integer trading
    day of each tick and ``log_path`` is the rescaled log-price path: within
    a session it moves by ``rescale_factor`` times the raw log return,
    across a session boundary it does not move at all.
    """

    symbol: str
    times: np.ndarray
    prices: np.ndarray
    session: np.ndarray
    log_path: np.ndarray
    rescale_factor: float = 1.0
    time_format: str = "float"
    diagnostics: tuple[IngestDiagnostic, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if np.any(self.prices <= 0):
            raise DataError("prices must be positive")
        same = self.session[1:] == self.session[:-1]
        if np.any(np.diff(self.times)[same] < 0):
            raise DataError("times decrease within a session")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def increments(self) -> np.ndarray:
        """Rescaled log returns inside sessions (overnight moves excluded)."""
        same = self.session[1:] == self.session[:-1]
        return np.diff(self.log_path)[same]


_EPOCH = _dt.datetime(1970, 1, 1)


def _iso_days(text: str) -> float:
    t = _dt.datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if t.tzinfo is not None:
        t = t.astimezone(_dt.timezone.utc).replace(tzinfo=None)
    return (t - _EPOCH).total_seconds() / 86400.0


def _detect_format(text: str) -> str:
    try:
        float(text)
        return "float"
    except ValueError:
        pass
    try:
        _iso_days(text)
        return "iso"
    except ValueError:
        raise DataError(f"cannot recognise timestamp {text!r}") from None


def ingest_csv(path: str | Path, rescale_factor: float = 15.0, symbol: str | None = None) -> TickSeries:
    """Read a ``timestamp,price`` file into a :class:`TickSeries`.

    The timestamp format (ISO-8601 or fractional days) is detected from the
    first data row. Rows that do not parse, have a non-positive price or a
    timestamp in the other format are skipped and reported with their line
    number in ``diagnostics``.
    """
    if not rescale_factor > 0:
        raise ValueError("rescale_factor must be positive")
    path = Path(path)
    times, prices, diags = [], [], []
    fmt = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["timestamp", "price"]:
            raise DataError(f"{path}: expected header 'timestamp,price'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                diags.append(IngestDiagnostic(line, f"expected 2 fields, got {len(row)}"))
                continue
            if fmt is None:
                try:
                    fmt = _detect_format(row[0])
                except DataError as exc:
                    diags.append(IngestDiagnostic(line, str(exc)))
                    continue
                log.info("%s: timestamps read as %s", path.name, "ISO-8601" if fmt == "iso" else "fractional days")
            try:
                t = float(row[0]) if fmt == "float" else _iso_days(row[0])
            except ValueError:
                diags.append(IngestDiagnostic(line, f"unparseable timestamp {row[0]!r}"))
                continue
            try:
                p = float(row[1])
            except ValueError:
                diags.append(IngestDiagnostic(line, f"unparseable price {row[1]!r}"))
                continue
            if not (p > 0 and math.isfinite(p)):
                diags.append(IngestDiagnostic(line, f"non-positive price {row[1]!r}"))
                continue
            times.append(t)
            prices.append(p)
    for d in diags:
        log.warning("%s line %d: %s", path.name, d.line, d.message)
    if len(times) < 2:
        raise DataError(f"{path}: fewer than two usable rows")
    t = np.array(times)
    p = np.array(prices)
    session = np.floor(t).astype(np.int64)
    r = np.diff(np.log(p))
    r[session[1:] != session[:-1]] = 0.0
    log_path = np.log(p[0]) + np.concatenate(([0.0], np.cumsum(rescale_factor * r)))
    return TickSeries(symbol or path.stem, t, p, session, log_path, float(rescale_factor), fmt, tuple(diags))


def write_tick_csv(series: TickSeries, path: str | Path, iso: bool = False) -> None:
    """Write raw ``timestamp,price`` rows (full precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "price"])
        for t, p in zip(series.times, series.prices):
            ts = (_EPOCH + _dt.timedelta(days=float(t))).isoformat() if iso else repr(float(t))
            w.writerow([ts, repr(float(p))])


# -- pairwise empirical test ---------------------------------------------------


@dataclass(frozen=True)
class PairwiseConfig:
    """Settings of the pairwise test; ``steps_per_day`` is the regular grid size per session."""

    steps_per_day: int = 390
    hac: HacConfig = HacConfig()
    alpha: float = 0.05
    mc_draws: int = 10_000
    master_seed: int = 0
    min_days: int = 5
    workers: int = 1


@dataclass(frozen=True)
class PairResult:
    i: int
    j: int
    symbol_i: str
    symbol_j: str
    report: TestReport | None
    message: str = ""


@dataclass(frozen=True)
class PairwiseResult:
    symbols: tuple[str, ...]
    pairs: tuple[PairResult, ...]

    def matrix_rows(self) -> list[list[str]]:
        """Upper-triangular p-value table: header row of symbols, blanks on and below the diagonal."""
        k = len(self.symbols)
        cells = [[""] * k for _ in range(k)]
        for pr in self.pairs:
            cells[pr.i][pr.j] = "NA" if pr.report is None else repr(pr.report.p_value)
        out = [[""] + list(self.symbols)]
        out += [[s] + row for s, row in zip(self.symbols, cells)]
        return out


def _previous_tick(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # a tick within a millionth of a step of a grid point counts as observed there,
    # so rounding in the grid cannot shift the sampled tick back by one
    tol = 1e-6 * (grid[-1] - grid[0]) / max(len(grid) - 1, 1)
    idx = np.searchsorted(times, grid + tol, side="right") - 1
    return values[np.clip(idx, 0, len(values) - 1)]


def align_pair(a: TickSeries, b: TickSeries, steps_per_day: int) -> tuple[SamplePath, SamplePath, int]:
    """Previous-tick synchronisation of two series on a regular grid per common session.

    Each common session contributes ``steps_per_day`` increments over the
    window where both series trade. Sessions are laid end to end as unit
    days and the path does not move between them. Returns the two paths and
    the number of sessions used.
    """
    common = np.intersect1d(np.unique(a.session), np.unique(b.session))
    dx, dy = [], []
    for s in common:
        ma, mb = a.session == s, b.session == s
        ta, tb = a.times[ma], b.times[mb]
        lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
        if not hi > lo:
            continue
        g = np.linspace(lo, hi, steps_per_day + 1)
        dx.append(np.diff(_previous_tick(ta, a.log_path[ma], g)))
        dy.append(np.diff(_previous_tick(tb, b.log_path[mb], g)))
    n_days = len(dx)
    if n_days == 0:
        raise DataError(f"{a.symbol} and {b.symbol} share no trading window")
    times = np.arange(n_days * steps_per_day + 1) / steps_per_day
    x = np.concatenate(([0.0], np.cumsum(np.concatenate(dx))))
    y = np.concatenate(([0.0], np.cumsum(np.concatenate(dy))))
    return SamplePath(times, x), SamplePath(times, y), n_days


def _pair_task(a: TickSeries, b: TickSeries, cfg: PairwiseConfig, k: int) -> tuple[TestReport | None, str]:
    try:
        x, y, n_days = align_pair(a, b, cfg.steps_per_day)
    except DataError as exc:
        return None, str(exc)
    if n_days < max(cfg.min_days, 2) or n_days <= cfg.hac.resolve(n_days):
        return None, f"only {n_days} common sessions"
    rep = run_test(
        x, y, cfg.hac, cfg.alpha, cfg.mc_draws, stream(cfg.master_seed, k), cross_day_pairs=False, seed=cfg.master_seed
    )
    return rep, ""


def _pair_rep(series, pairs, cfg, k):
    i, j = pairs[k]
    return _pair_task(series[i], series[j], cfg, k)


def pairwise_test_matrix(series: Sequence[TickSeries], cfg: PairwiseConfig = PairwiseConfig()) -> PairwiseResult:
    """Dependence test for every unordered pair ``i < j``.

    Pair ``k`` (in row-major upper-triangle order) draws its mixture sample
    from the stream keyed by ``(master_seed, k)``. Pairs with too few common
    sessions get no report and a message; they are also logged.
    """
    if len(series) < 2:
        raise ValueError("need at least two series")
    pairs = [(i, j) for i in range(len(series)) for j in range(i + 1, len(series))]
    res = _map_reps(_pair_rep, (tuple(series), pairs, cfg), len(pairs), cfg.workers)
    out = []
    for (i, j), (rep, msg) in zip(pairs, res):
        if rep is None:
            log.warning("skipping %s/%s: %s", series[i].symbol, series[j].symbol, msg)
        out.append(PairResult(i, j, series[i].symbol, series[j].symbol, rep, msg))
    return PairwiseResult(tuple(s.symbol for s in series), tuple(out))


# -- output ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_rows_csv(rows: Sequence, fh) -> None:
    """Dataclass rows to CSV in field order; floats at full precision, NaN as an empty cell."""
    if not rows:
        raise ValueError("no rows")
    names = list(rows[0].__dataclass_fields__)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, n)) for n in names])
