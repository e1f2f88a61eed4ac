"""Daily Laplace blocks and their long-run (HAC) covariance.

Over a span of ``T`` unit days the data are cut into daily blocks. For each
day and each Laplace point the block statistics are

* ``z_xy``: ``dt * sum cos((sqrt(2u) dX_i + sqrt(2v) dY_{i+1}) / sqrt(dt))``
* ``z_x``: ``dt * sum cos(sqrt(2u) dX_i / sqrt(dt))``
* ``z_y``: ``dt * sum cos(sqrt(2v) dY_i / sqrt(dt))``

with ``i`` running over the increments of that day. Their sample means
estimate the stationary joint and marginal Laplace transforms of the squared
volatilities; :func:`hac_cov` estimates the long-run covariance of the three
means and :func:`gamma_vec` supplies the delta-method weights for the
dependence contrast ``mean(z_xy) - mean(z_x) * mean(z_y)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .estimators import LaplacePoint, as_point, synchronous_increments
from .simkit import SamplePath

__all__ = [
    "BlockStats",
    "HacConfig",
    "LongRunCov",
    "COMPONENTS",
    "daily_blocks",
    "default_bandwidth",
    "kernel_weight",
    "lag_covariances",
    "hac_cov",
    "hac_cov_all",
    "gamma_vec",
    "s_stat",
    "s_stats",
    "write_blocks_csv",
    "read_blocks_csv",
]

log = logging.getLogger(__name__)

COMPONENTS = ("xy", "x", "y")


@dataclass(frozen=True)
class BlockStats:
    """Per-day block statistics, arrays of shape ``(n_days, len(grid))``."""

    grid: tuple[LaplacePoint, ...]
    z_xy: np.ndarray
    z_x: np.ndarray
    z_y: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(as_point(p) for p in self.grid))
        shape = (self.z_xy.shape[0], len(self.grid))
        for name in ("z_xy", "z_x", "z_y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1 and len(self.grid) == 1:
                arr = arr[:, None]
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)

    @property
    def n_days(self) -> int:
        return self.z_xy.shape[0]

    def index(self, p) -> int:
        """Position of a grid point (an ``int`` is passed through)."""
        if isinstance(p, (int, np.integer)):
            return int(p)
        p = as_point(p)
        for k, g in enumerate(self.grid):
            if np.isclose(g.u, p.u) and np.isclose(g.v, p.v):
                return k
        raise KeyError(f"{p} is not on the block grid")

    def stacked(self) -> np.ndarray:
        """``(n_days, 3, G)`` array in (xy, x, y) order."""
        return np.stack([self.z_xy, self.z_x, self.z_y], axis=1)


@dataclass(frozen=True)
class HacConfig:
    """Kernel and bandwidth of the long-run covariance estimator.

    ``form="newey_west"`` adds to each lag-``i`` cross-moment its full
    transpose, which gives a positive semi-definite estimate under the
    Bartlett kernel. ``form="point_swap"`` instead adds the lag-``i``
    cross-moment with only the two Laplace points exchanged. Both agree on
    the blocks pairing a component with itself; off those blocks
    ``point_swap`` is not a consistent estimate and is typically strongly
    indefinite, so it is kept for comparison only.
    """

    kernel: Literal["bartlett", "parzen"] = "bartlett"
    bandwidth: int | None = None
    form: Literal["newey_west", "point_swap"] = "newey_west"

    def __post_init__(self):
        if self.kernel not in ("bartlett", "parzen"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and (int(self.bandwidth) != self.bandwidth or self.bandwidth < 0):
            raise ValueError("bandwidth must be a nonnegative integer")
        if self.form not in ("newey_west", "point_swap"):
            raise ValueError(f"unknown HAC form {self.form!r}")

    def resolve(self, n_days: int) -> int:
        return default_bandwidth(n_days) if self.bandwidth is None else int(self.bandwidth)


@dataclass(frozen=True)
class LongRunCov:
    """3x3 long-run covariance between the block means at two Laplace points."""

    p: LaplacePoint
    q: LaplacePoint
    matrix: np.ndarray


def default_bandwidth(n_days: int) -> int:
    # cbrt is exact on perfect cubes; the slack absorbs rounding in the product
    return int(np.floor(1.2 * np.cbrt(n_days) + 1e-9))


def kernel_weight(cfg: HacConfig, lag: int, bandwidth: int | None = None) -> float:
    """Lag weight: Bartlett ``1 - i/(L+1)`` or the Parzen window at ``i/(L+1)``."""
    L = cfg.bandwidth if bandwidth is None else bandwidth
    if L is None:
        raise ValueError("bandwidth not resolved")
    if lag < 0 or lag > L:
        raise ValueError(f"lag {lag} outside [0, {L}]")
    q = lag / (L + 1.0)
    if cfg.kernel == "bartlett":
        return 1.0 - q
    if q <= 0.5:
        return 1.0 - 6.0 * q**2 + 6.0 * q**3
    return 2.0 * (1.0 - q) ** 3


def _day_layout(dx: np.ndarray, dt: float, t_span: float) -> int:
    m = 1.0 / dt
    if abs(m - round(m)) > 1e-6 * m:
        raise ValueError("a unit day does not hold a whole number of increments")
    n_days = t_span
    if abs(n_days - round(n_days)) > 1e-9 * max(1.0, n_days):
        raise ValueError(f"span {t_span} is not a whole number of days")
    m, n_days = int(round(m)), int(round(n_days))
    if m * n_days != len(dx):
        raise ValueError("increment count does not match days * steps per day")
    return m


def daily_blocks(
    x: SamplePath,
    y: SamplePath,
    grid: Iterable,
    cross_day_pairs: bool = True,
) -> BlockStats:
    """Block statistics for every day and grid point.

    The pair statistic uses ``dY_{i+1}`` and may reach into the next day;
    the globally last X increment has no partner and is dropped. With
    ``cross_day_pairs=False`` (stitched intraday sessions) every pair that
    straddles a day boundary is dropped instead.
    """
    grid = tuple(as_point(p) for p in grid)
    dx, dy, dt = synchronous_increments(x, y)
    m = _day_layout(dx, dt, x.times[-1] - x.times[0])
    n = len(dx)
    n_days = n // m
    if n_days * dt > 0.25:
        log.warning("T * dt = %.3g exceeds 0.25; the long-span approximation may be poor", n_days * dt)

    us = np.unique([p.u for p in grid])
    vs = np.unique([p.v for p in grid])
    sq = np.sqrt(dt)
    ax = np.multiply.outer(np.sqrt(2.0 * us), dx) / sq
    ay = np.multiply.outer(np.sqrt(2.0 * vs), dy) / sq
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)

    # partner of X increment i is Y increment i + 1; the last one has none
    cy_next = np.zeros_like(cy)
    sy_next = np.zeros_like(sy)
    cy_next[:, :-1] = cy[:, 1:]
    sy_next[:, :-1] = sy[:, 1:]
    if not cross_day_pairs:
        cy_next[:, m - 1 :: m] = 0.0
        sy_next[:, m - 1 :: m] = 0.0

    def days(a):
        return a.reshape(a.shape[0], n_days, m)

    zxy = dt * (
        np.einsum("ktm,ltm->tkl", days(cx), days(cy_next)) - np.einsum("ktm,ltm->tkl", days(sx), days(sy_next))
    )
    zx = dt * days(cx).sum(axis=2).T
    zy = dt * days(cy).sum(axis=2).T

    iu = np.searchsorted(us, [p.u for p in grid])
    iv = np.searchsorted(vs, [p.v for p in grid])
    return BlockStats(grid, zxy[:, iu, iv], zx[:, iu], zy[:, iv], dt)


def lag_covariances(b: np.ndarray, max_lag: int) -> np.ndarray:
    """``out[l, r, s] = (1/T) sum_{t>l} b[t, r] b[t-l, s]`` for ``l = 0..max_lag``."""
    T = b.shape[0]
    return np.stack([b[l:].T @ b[: T - l] / T for l in range(max_lag + 1)])


def hac_cov_all(blocks: BlockStats, cfg: HacConfig) -> np.ndarray:
    """Long-run covariance for every pair of grid points.

    Returns an array ``V`` of shape ``(3, G, 3, G)`` with ``V[a, g, b, h]`` the
    covariance between component ``a`` at point ``g`` and component ``b`` at
    point ``h``. Entries with ``a > b`` are filled from ``V[b, h, a, g]`` so
    that ``V[:, g, :, h] == V[:, h, :, g].T`` holds exactly.
    """
    T, G = blocks.n_days, len(blocks.grid)
    L = cfg.resolve(T)
    if L >= T:
        raise ValueError(f"bandwidth {L} must be smaller than the number of days {T}")
    z = blocks.stacked()
    b = (z - z.mean(axis=0)).reshape(T, 3 * G)
    gam = lag_covariances(b, L).reshape(L + 1, 3, G, 3, G)
    w = gam[0].copy()
    for i in range(1, L + 1):
        wi = kernel_weight(cfg, i, L)
        if cfg.form == "point_swap":
            w += wi * (gam[i] + gam[i].transpose(0, 3, 2, 1))
        else:
            w += wi * (gam[i] + gam[i].transpose(2, 3, 0, 1))
    out = w.copy()
    for a in range(3):
        for c in range(a):
            out[a, :, c, :] = w[c, :, a, :].T
    return out


def hac_cov(blocks: BlockStats, cfg: HacConfig, p, q) -> LongRunCov:
    """3x3 long-run covariance of the (xy, x, y) block means at points ``p`` and ``q``."""
    gi, hi = blocks.index(p), blocks.index(q)
    sub = BlockStats(
        (blocks.grid[gi], blocks.grid[hi]),
        blocks.z_xy[:, [gi, hi]],
        blocks.z_x[:, [gi, hi]],
        blocks.z_y[:, [gi, hi]],
        blocks.dt,
    )
    v = hac_cov_all(sub, cfg)
    return LongRunCov(blocks.grid[gi], blocks.grid[hi], v[:, 0, :, 1])


def gamma_vec(blocks: BlockStats, g) -> np.ndarray:
    """Delta-method weights ``[1, -mean z_y, -mean z_x]`` at one grid point."""
    k = blocks.index(g)
    return np.array([1.0, -blocks.z_y[:, k].mean(), -blocks.z_x[:, k].mean()])


def s_stats(blocks: BlockStats) -> np.ndarray:
    """Scaled dependence contrast at every grid point."""
    T = blocks.n_days
    return np.sqrt(T) * (blocks.z_xy.mean(axis=0) - blocks.z_x.mean(axis=0) * blocks.z_y.mean(axis=0))


def s_stat(blocks: BlockStats, g) -> float:
    """``sqrt(T) * (mean z_xy - mean z_x * mean z_y)`` at one grid point."""
    if blocks.n_days < 2:
        raise ValueError("need at least 2 days")
    return float(s_stats(blocks)[blocks.index(g)])


def write_blocks_csv(blocks: BlockStats, fh) -> None:
    """CSV with columns ``day, u, v, z_xy, z_x, z_y`` (days numbered from 1)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["day", "u", "v", "z_xy", "z_x", "z_y"])
    for t in range(blocks.n_days):
        for k, p in enumerate(blocks.grid):
            w.writerow([t + 1, repr(p.u), repr(p.v), repr(float(blocks.z_xy[t, k])), repr(float(blocks.z_x[t, k])), repr(float(blocks.z_y[t, k]))])


def read_blocks_csv(fh) -> BlockStats:
    rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty block file")
    grid: list[tuple[float, float]] = []
    for r in rows:
        key = (float(r["u"]), float(r["v"]))
        if key not in grid:
            grid.append(key)
    days = sorted({int(r["day"]) for r in rows})
    pos = {d: i for i, d in enumerate(days)}
    gpos = {g: i for i, g in enumerate(grid)}
    arr = np.full((3, len(days), len(grid)), np.nan)
    for r in rows:
        t, k = pos[int(r["day"])], gpos[(float(r["u"]), float(r["v"]))]
        arr[:, t, k] = float(r["z_xy"]), float(r["z_x"]), float(r["z_y"])
    if np.isnan(arr).any():
        raise ValueError("block file does not cover every (day, point) pair")
    return BlockStats(tuple(LaplacePoint(*g) for g in grid), arr[0], arr[1], arr[2])
