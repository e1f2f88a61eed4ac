"""Long-span test of independence between two volatility processes.

The statistic is a Riemann sum of the squared dependence contrast over a
grid of Laplace points. Under independence its limit is a weighted sum of
independent chi-square(1) variables whose weights are the eigenvalues of the
grid covariance of the contrast; critical values and p-values come from
Monte Carlo draws of that mixture.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import LaplacePoint
from .longspan import BlockStats, HacConfig, daily_blocks, hac_cov_all, s_stats
from .simkit import SamplePath

__all__ = [
    "TestGrid",
    "MixtureSpec",
    "TestReport",
    "test_statistic",
    "limit_cov_matrix",
    "mixture_from_matrix",
    "mixture_draws",
    "mixture_quantile",
    "p_value",
    "calibrate",
    "run_test",
    "report_to_json",
    "report_from_json",
    "SUMMARY_FIELDS",
    "summary_row",
]


@dataclass(frozen=True)
class TestGrid:
    """Row-major grid ``u_i = i h, v_j = j h`` (``i`` outer) with equal cells."""

    __test__ = False

    points: tuple[LaplacePoint, ...]
    cell_weight: float

    @classmethod
    def default(cls, n: int = 10, upper: float = 1.0) -> "TestGrid":
        h = upper / n
        pts = tuple(LaplacePoint((i + 1) * h, (j + 1) * h) for i in range(n) for j in range(n))
        return cls(pts, h * h)

    def __len__(self) -> int:
        return len(self.points)

    def matches(self, blocks: BlockStats) -> bool:
        if len(blocks.grid) != len(self.points):
            return False
        return all(np.isclose(a.u, b.u) and np.isclose(a.v, b.v) for a, b in zip(blocks.grid, self.points))


@dataclass(frozen=True)
class MixtureSpec:
    """Nonnegative eigenvalues (nonincreasing) of the limiting grid covariance."""

    eigenvalues: np.ndarray
    n_kept: int
    n_discarded_negative: int
    weight: float = 0.01

    @property
    def degenerate(self) -> bool:
        return not np.any(self.eigenvalues > 0)


@dataclass(frozen=True)
class TestReport:
    __test__ = False

    statistic: float
    critical_value: float
    p_value: float
    alpha: float
    reject: bool
    n_kept: int
    n_discarded_negative: int
    degenerate: bool
    n_days: int
    dt: float | None
    bandwidth: int
    kernel: str
    hac_form: str
    mc_draws: int
    seed: int | None = None
    eigenvalues: list[float] = field(default_factory=list)


def _check_grid(blocks: BlockStats, grid: TestGrid | None) -> TestGrid:
    if grid is None:
        grid = TestGrid.default()
    if not grid.matches(blocks):
        raise ValueError("block statistics were not computed on the test grid")
    return grid


def test_statistic(blocks: BlockStats, grid: TestGrid | None = None) -> float:
    """Riemann sum ``cell_weight * sum_g s_g^2`` of the squared contrast."""
    grid = _check_grid(blocks, grid)
    s = s_stats(blocks)
    return float(grid.cell_weight * np.sum(s * s))


test_statistic.__test__ = False


def limit_cov_matrix(blocks: BlockStats, cfg: HacConfig, project: bool = False) -> np.ndarray:
    """``G x G`` covariance of the contrast, ``gamma(g) V(g, h) gamma(h)^T``.

    The result is symmetrised as ``(M + M^T) / 2``. With ``project=True``
    negative eigenvalues are set to zero (nearest PSD matrix in Frobenius
    norm), which also makes every diagonal entry nonnegative.
    """
    v = hac_cov_all(blocks, cfg)
    gam = np.stack([np.ones(len(blocks.grid)), -blocks.z_y.mean(axis=0), -blocks.z_x.mean(axis=0)])
    m = np.einsum("ag,agbh,bh->gh", gam, v, gam)
    m = 0.5 * (m + m.T)
    if project:
        lam, q = np.linalg.eigh(m)
        m = (q * np.clip(lam, 0.0, None)) @ q.T
        m = 0.5 * (m + m.T)
    return m


def mixture_from_matrix(m: np.ndarray, weight: float) -> MixtureSpec:
    """Eigenvalues of a symmetric matrix with the negative ones discarded."""
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]
    keep = lam >= 0
    return MixtureSpec(lam[keep].copy(), int(keep.sum()), int((~keep).sum()), weight)


def mixture_draws(mix: MixtureSpec, mc_draws: int, rng: np.random.Generator, chunk: int = 8192) -> np.ndarray:
    """``weight * sum_i pi_i Z_i^2`` for ``mc_draws`` independent rows.

    Rows are generated in chunks from one stream in row-major order, so the
    output does not depend on ``chunk``. Eigenvalues below ``1e-12`` of the
    largest one are left out of the sum.
    """
    if mix.degenerate:
        return np.zeros(mc_draws)
    lam = mix.eigenvalues[mix.eigenvalues > 1e-12 * mix.eigenvalues[0]]
    out = np.empty(mc_draws)
    for start in range(0, mc_draws, chunk):
        k = min(chunk, mc_draws - start)
        z = rng.standard_normal((k, len(lam)))
        out[start : start + k] = (z * z) @ lam
    return mix.weight * out


def _check_draws(mc_draws: int) -> None:
    if mc_draws < 10_000:
        raise ValueError("use at least 10^4 Monte Carlo draws")


def mixture_quantile(mix: MixtureSpec, alpha: float, mc_draws: int, rng: np.random.Generator) -> float:
    """Empirical ``1 - alpha`` quantile of the chi-square mixture.

    A mixture with no positive eigenvalue is a point mass at zero; ``0.0`` is
    returned and ``mix.degenerate`` is true.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    _check_draws(mc_draws)
    if mix.degenerate:
        return 0.0
    return float(np.quantile(mixture_draws(mix, mc_draws, rng), 1.0 - alpha))


def _p_from_draws(statistic: float, draws: np.ndarray) -> float:
    r = int(np.count_nonzero(draws >= statistic))
    return (r + 1.0) / (len(draws) + 1.0)


def p_value(statistic: float, mix: MixtureSpec, mc_draws: int, rng: np.random.Generator) -> float:
    """Monte Carlo p-value ``(r + 1) / (N + 1)``, ``r`` = draws at or above ``statistic``."""
    _check_draws(mc_draws)
    return _p_from_draws(statistic, mixture_draws(mix, mc_draws, rng))


def calibrate(
    blocks: BlockStats,
    cfg: HacConfig,
    mc_draws: int,
    rng: np.random.Generator,
    grid: TestGrid | None = None,
) -> tuple[float, MixtureSpec, np.ndarray]:
    """Statistic, mixture and one shared set of mixture draws for a block set."""
    grid = _check_grid(blocks, grid)
    _check_draws(mc_draws)
    stat = test_statistic(blocks, grid)
    mix = mixture_from_matrix(limit_cov_matrix(blocks, cfg), grid.cell_weight)
    return stat, mix, mixture_draws(mix, mc_draws, rng)


def run_test(
    x: SamplePath,
    y: SamplePath,
    cfg: HacConfig,
    alpha: float,
    mc_draws: int,
    rng: np.random.Generator,
    grid: TestGrid | None = None,
    cross_day_pairs: bool = True,
    seed: int | None = None,
) -> TestReport:
    """Full pipeline from two synchronous whole-day paths to a :class:`TestReport`.

    The critical value and the p-value are read off the same set of mixture
    draws, so ``reject`` agrees with ``p_value <= alpha`` up to the
    finite-sample correction.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    grid = grid or TestGrid.default()
    blocks = daily_blocks(x, y, grid.points, cross_day_pairs=cross_day_pairs)
    stat, mix, draws = calibrate(blocks, cfg, mc_draws, rng, grid)
    crit = 0.0 if mix.degenerate else float(np.quantile(draws, 1.0 - alpha))
    return TestReport(
        statistic=stat,
        critical_value=crit,
        p_value=_p_from_draws(stat, draws),
        alpha=alpha,
        reject=bool(stat >= crit),
        n_kept=mix.n_kept,
        n_discarded_negative=mix.n_discarded_negative,
        degenerate=mix.degenerate,
        n_days=blocks.n_days,
        dt=blocks.dt,
        bandwidth=cfg.resolve(blocks.n_days),
        kernel=cfg.kernel,
        hac_form=cfg.form,
        mc_draws=mc_draws,
        seed=seed,
        eigenvalues=[float(e) for e in mix.eigenvalues],
    )


def report_to_json(report: TestReport) -> str:
    """One JSON document; keys follow the field order of :class:`TestReport`."""
    return json.dumps(asdict(report), indent=2) + "\n"


def report_from_json(text: str) -> TestReport:
    return TestReport(**json.loads(text))


SUMMARY_FIELDS = ("pair_id", "statistic", "d_alpha", "p_value", "n_discarded")


def summary_row(report: TestReport, pair_id: str) -> str:
    """Single CSV line (no header) for batch runs."""
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(
        [pair_id, repr(report.statistic), repr(report.critical_value), repr(report.p_value), report.n_discarded_negative]
    )
    return buf.getvalue()
