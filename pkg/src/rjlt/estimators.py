"""Realized joint Laplace transform (RJLT) estimators.

All estimators average cosines of scaled return pairs in which the ``X``
return and the ``Y`` return come from different sampling intervals, so that
for a locally constant volatility each summand has conditional mean
``exp(-u sigma_x^2 - v sigma_y^2)``.

Two layers are exposed: the ``*_hat`` functions take :class:`SamplePath`
objects and return an :class:`RjltEstimate`; the ``*_stat`` functions work on
raw increment arrays and broadcast over arrays of ``(u, v)`` so Monte Carlo
loops can evaluate a whole grid of points at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .simkit import SamplePath

__all__ = [
    "LaplacePoint",
    "RjltEstimate",
    "as_point",
    "xi",
    "synchronous_increments",
    "v_stat",
    "u_stat",
    "vprime_stat",
    "AsyncCover",
    "async_cover",
    "u_async_stat",
    "v_hat",
    "u_hat",
    "v_prime_hat",
    "u_async_hat",
]

EstimatorKind = Literal["V", "U", "Vprime", "Uasync"]


@dataclass(frozen=True)
class LaplacePoint:
    u: float
    v: float

    def __post_init__(self):
        if not (self.u >= 0 and self.v >= 0):
            raise ValueError(f"Laplace arguments must be nonnegative, got ({self.u}, {self.v})")

    def __iter__(self):
        yield self.u
        yield self.v


def as_point(p) -> LaplacePoint:
    if isinstance(p, LaplacePoint):
        return p
    u, v = p
    return LaplacePoint(float(u), float(v))


@dataclass(frozen=True)
class RjltEstimate:
    value: float
    estimator_kind: EstimatorKind
    n_increments_used: int
    dt: float | None = None
    n_skipped: int = 0
    n_cover_overlaps: int = 0


def xi(dx, dy_next, dt: float, p) -> np.ndarray | float:
    """Single summand ``cos((sqrt(2u) dx + sqrt(2v) dy_next) / sqrt(dt))``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = as_point(p)
    out = np.cos((np.sqrt(2 * p.u) * np.asarray(dx) + np.sqrt(2 * p.v) * np.asarray(dy_next)) / np.sqrt(dt))
    return float(out) if np.ndim(out) == 0 else out


def synchronous_increments(x: SamplePath, y: SamplePath, rtol: float = 1e-6) -> tuple[np.ndarray, np.ndarray, float]:
    """Increments of two paths sampled on one shared uniform grid.

    Raises ``ValueError`` when the time stamps differ between the paths or
    the spacing is not uniform to relative tolerance ``rtol``.
    """
    if len(x) != len(y) or not np.allclose(x.times, y.times, rtol=0, atol=1e-12 * max(1.0, x.times[-1])):
        raise ValueError("paths are not observed at the same times")
    dts = np.diff(x.times)
    dt = (x.times[-1] - x.times[0]) / len(dts)
    if np.max(np.abs(dts - dt)) > rtol * dt:
        raise ValueError("observation grid is not uniform")
    return x.increments, y.increments, float(dt)


def _phase(w, inc, dt):
    # sqrt(2w) * inc / sqrt(dt), with w broadcast over leading axes
    w = np.asarray(w, dtype=float)
    return np.multiply.outer(np.sqrt(2.0 * w), inc) / np.sqrt(dt)


def _grid_args(u, v):
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("Laplace arguments must be nonnegative")
    return u, v


def _finish(out):
    return float(out) if np.ndim(out) == 0 else out


def v_stat(dx: np.ndarray, dy: np.ndarray, dt: float, u, v):
    """Non-overlapped estimator ``2 dt * sum_i xi_{2i-1}`` on increment arrays."""
    u, v = _grid_args(u, v)
    m = len(dx) // 2
    dxo = dx[0 : 2 * m : 2]
    dye = dy[1 : 2 * m : 2]
    c = np.cos(_phase(u, dxo, dt) + _phase(v, dye, dt))
    return _finish(2.0 * dt * c.sum(axis=-1))


def u_stat(dx: np.ndarray, dy: np.ndarray, dt: float, u, v):
    """Overlapped estimator ``dt * sum_{i=1}^{n-1} xi_i`` on increment arrays."""
    u, v = _grid_args(u, v)
    c = np.cos(_phase(u, dx[:-1], dt) + _phase(v, dy[1:], dt))
    return _finish(dt * c.sum(axis=-1))


def vprime_stat(dx: np.ndarray, dy: np.ndarray, dt: float, u, v):
    """Symmetrised non-overlapped estimator (both orderings of each pair)."""
    u, v = _grid_args(u, v)
    m = len(dx) // 2
    dxo, dxe = dx[0 : 2 * m : 2], dx[1 : 2 * m : 2]
    dyo, dye = dy[0 : 2 * m : 2], dy[1 : 2 * m : 2]
    c1 = np.cos(_phase(u, dxo, dt) + _phase(v, dye, dt))
    c2 = np.cos(_phase(v, dyo, dt) + _phase(u, dxe, dt))
    return _finish(dt * (c1.sum(axis=-1) + c2.sum(axis=-1)))


@dataclass(frozen=True)
class AsyncCover:
    """Index bookkeeping pairing each X increment with a covering Y increment.

    ``x_lo``/``x_hi`` index the X observations bounding each used increment,
    ``y_lo``/``y_hi`` the Y observations bounding its cover.
    """

    x_lo: np.ndarray
    x_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    n_skipped: int
    n_overlaps: int


def async_cover(tx: np.ndarray, ty: np.ndarray, cover: Literal["same", "next"] = "same") -> AsyncCover:
    """Smallest Y interval covering each X interval.

    With ``cover="same"`` the X increment over ``(tx[i-1], tx[i]]`` is paired
    with ``[max{ty <= tx[i-1]}, min{ty >= tx[i]}]``. With ``cover="next"`` it
    is paired with the cover of the following X interval instead, which on a
    shared grid reproduces the lead-one pairing of the synchronous overlapped
    estimator. Increments without a cover at the path edges are skipped.
    ``n_overlaps`` counts consecutive used covers that share a positive-length
    stretch of time.
    """
    tx = np.asarray(tx, dtype=float)
    ty = np.asarray(ty, dtype=float)
    if np.any(np.diff(tx) <= 0) or np.any(np.diff(ty) <= 0):
        raise ValueError("observation times must be strictly increasing")
    n = len(tx) - 1
    x_lo = np.arange(n)
    x_hi = x_lo + 1
    if cover == "same":
        a, b = tx[:-1], tx[1:]
    elif cover == "next":
        a, b = tx[1:-1], tx[2:]
        x_lo, x_hi = x_lo[:-1], x_hi[:-1]
    else:
        raise ValueError(f"unknown cover rule {cover!r}")
    y_lo = np.searchsorted(ty, a, side="right") - 1
    y_hi = np.searchsorted(ty, b, side="left")
    ok = (y_lo >= 0) & (y_hi < len(ty))
    n_skipped = n - int(ok.sum())
    y_lo, y_hi, x_lo, x_hi = y_lo[ok], y_hi[ok], x_lo[ok], x_hi[ok]
    n_overlaps = int(np.sum(ty[y_lo[1:]] < ty[y_hi[:-1]]))
    return AsyncCover(x_lo, x_hi, y_lo, y_hi, n_skipped, n_overlaps)


def u_async_stat(x: SamplePath, y: SamplePath, u, v, cover: Literal["same", "next"] = "same", cv: AsyncCover | None = None):
    """Asynchronous overlapped estimator on irregular, non-aligned samples.

    Each summand is ``dtx * cos(sqrt(2u) dX / sqrt(dtx) + sqrt(2v) dY' / sqrt(dty'))``
    where ``dY'`` is the Y increment over the cover of the X interval.
    """
    u, v = _grid_args(u, v)
    if cv is None:
        cv = async_cover(x.times, y.times, cover)
    dtx = x.times[cv.x_hi] - x.times[cv.x_lo]
    dxi = (x.values[cv.x_hi] - x.values[cv.x_lo]) / np.sqrt(dtx)
    dty = y.times[cv.y_hi] - y.times[cv.y_lo]
    dyi = (y.values[cv.y_hi] - y.values[cv.y_lo]) / np.sqrt(dty)
    c = np.cos(np.multiply.outer(np.sqrt(2.0 * u), dxi) + np.multiply.outer(np.sqrt(2.0 * v), dyi))
    return _finish(c @ dtx)


def v_hat(x: SamplePath, y: SamplePath, p) -> RjltEstimate:
    """Non-overlapped RJLT ``V_n``; an odd trailing increment is dropped."""
    p = as_point(p)
    dx, dy, dt = synchronous_increments(x, y)
    if len(dx) < 2:
        raise ValueError("need at least 2 increments")
    return RjltEstimate(v_stat(dx, dy, dt, p.u, p.v), "V", 2 * (len(dx) // 2), dt)


def u_hat(x: SamplePath, y: SamplePath, p) -> RjltEstimate:
    """Overlapped RJLT ``U_n`` with ``n - 1`` summands."""
    p = as_point(p)
    dx, dy, dt = synchronous_increments(x, y)
    return RjltEstimate(u_stat(dx, dy, dt, p.u, p.v), "U", len(dx), dt)


def v_prime_hat(x: SamplePath, y: SamplePath, p) -> RjltEstimate:
    """Symmetrised non-overlapped RJLT ``V'_n``."""
    p = as_point(p)
    dx, dy, dt = synchronous_increments(x, y)
    if len(dx) < 2:
        raise ValueError("need at least 2 increments")
    return RjltEstimate(vprime_stat(dx, dy, dt, p.u, p.v), "Vprime", 2 * (len(dx) // 2), dt)


def u_async_hat(x: SamplePath, y: SamplePath, p, cover: Literal["same", "next"] = "same") -> RjltEstimate:
    """Asynchronous RJLT ``U'_n``; reports skipped increments and cover overlaps."""
    p = as_point(p)
    cv = async_cover(x.times, y.times, cover)
    val = u_async_stat(x, y, p.u, p.v, cv=cv)
    return RjltEstimate(val, "Uasync", len(cv.x_lo), None, cv.n_skipped, cv.n_overlaps)
