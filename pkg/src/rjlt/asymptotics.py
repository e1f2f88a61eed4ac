"""Fixed-span asymptotic covariances of the RJLT estimators and their plug-in estimates.

For a locally constant volatility pair the scaled estimation error of the
non-overlapped estimator has conditional covariance ``F_V`` integrated over
time, and the overlapped one ``F_U(.; rho)``; see :func:`f_cov_v` and
:func:`f_cov_u`. :func:`gamma_hat_v` and :func:`gamma_hat_u` estimate those
integrals from data, and :func:`studentize` turns an estimation error into
an approximately standard normal statistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .estimators import LaplacePoint, as_point, synchronous_increments
from .simkit import SamplePath, VolPath

__all__ = [
    "CovQuery",
    "StudentizedStat",
    "f_cov_v",
    "f_cov_u",
    "integrated_f_v",
    "integrated_f_u",
    "gamma_v_stat",
    "gamma_u_stat",
    "gamma_hat_v",
    "gamma_hat_u",
    "studentize",
    "GAMMA_FLOOR",
]

GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class CovQuery:
    p: LaplacePoint
    q: LaplacePoint

    def __post_init__(self):
        object.__setattr__(self, "p", as_point(self.p))
        object.__setattr__(self, "q", as_point(self.q))

    @classmethod
    def diagonal(cls, p) -> "CovQuery":
        return cls(as_point(p), as_point(p))


@dataclass(frozen=True)
class StudentizedStat:
    z: float
    estimate: float
    truth: float
    gamma: float
    dt: float
    flagged: bool = False  # raw gamma was <= 0 and got floored


def _exp_sinh2(c, s):
    # exp(-s) * sinh(c)^2 without overflow or cancellation; s >= 2|c| on use
    a = np.abs(c)
    return 0.25 * (-np.expm1(-2 * a)) ** 2 * np.exp(2 * a - s)


def f_cov_v(x, y, xb, yb):
    """Covariance kernel of the non-overlapped estimator.

    ``exp(-(x^2+y^2+xb^2+yb^2)) * (exp(-2c) + exp(2c) - 2)`` with
    ``c = x xb + y yb``, evaluated as ``4 exp(-S) sinh(c)^2`` which is
    free of cancellation near the origin.
    """
    x, y, xb, yb = (np.asarray(a, dtype=float) for a in (x, y, xb, yb))
    s = x * x + y * y + xb * xb + yb * yb
    c = x * xb + y * yb
    out = 4 * _exp_sinh2(c, s)
    return float(out) if out.ndim == 0 else out


def f_cov_u(x, y, xb, yb, z):
    """Covariance kernel of the overlapped estimator under Brownian correlation ``z``.

    Half of ``exp(-S)`` times the sum of ``2 cosh`` of ``2(x xb + y yb)``,
    ``2 xb y z`` and ``2 x yb z``, minus ``6 exp(-S)``.
    """
    x, y, xb, yb, z = (np.asarray(a, dtype=float) for a in (x, y, xb, yb, z))
    if np.any(np.abs(z) > 1):
        raise ValueError("correlation must satisfy |z| <= 1")
    s = x * x + y * y + xb * xb + yb * yb
    c = x * xb + y * yb
    d1 = xb * y * z
    d2 = x * yb * z
    # each exp(-2a) + exp(2a) - 2 pair equals 4 sinh(a)^2
    out = 2 * (_exp_sinh2(c, s) + _exp_sinh2(d1, s) + _exp_sinh2(d2, s))
    return float(out) if out.ndim == 0 else out


def _kernel_args(vol: VolPath, p, q):
    p, q = as_point(p), as_point(q)
    sx, sy = vol.sigma_x[:-1], vol.sigma_y[:-1]
    return (np.sqrt(p.u) * sx, np.sqrt(p.v) * sy, np.sqrt(q.u) * sx, np.sqrt(q.v) * sy), np.diff(vol.times)


def integrated_f_v(vol: VolPath, p, q) -> float:
    """Left Riemann sum of ``F_V`` along a known volatility path."""
    args, dts = _kernel_args(vol, p, q)
    return float(f_cov_v(*args) @ dts)


def integrated_f_u(vol: VolPath, p, q, rho: float) -> float:
    """Left Riemann sum of ``F_U(.; rho)`` along a known volatility path."""
    args, dts = _kernel_args(vol, p, q)
    return float(f_cov_u(*args, rho) @ dts)


def _cos1(w, inc, dt):
    return np.cos(np.sqrt(2.0 * w) * inc / np.sqrt(dt))


def _cos2(u, v, dx, dy, dt):
    return np.cos((np.sqrt(2.0 * u) * dx + np.sqrt(2.0 * v) * dy) / np.sqrt(dt))


def gamma_v_stat(dx: np.ndarray, dy: np.ndarray, dt: float, p, q) -> float:
    """Plug-in covariance of the non-overlapped estimator on increment arrays."""
    (u, v), (u2, v2) = as_point(p), as_point(q)
    m = len(dx) // 2
    dxo = dx[0 : 2 * m : 2]
    dye = dy[1 : 2 * m : 2]
    prod = _cos2(u, v, dxo, dye, dt) * _cos2(u2, v2, dxo, dye, dt)
    joint = _cos2(u + u2, v + v2, dxo, dye, dt)
    return float(4.0 * dt * prod.sum() - 4.0 * dt * joint.sum())


LagConvention = Literal["shift", "drop_first"]


def gamma_u_stat(dx: np.ndarray, dy: np.ndarray, dt: float, p, q, convention: LagConvention = "shift") -> float:
    """Plug-in covariance of the overlapped estimator on increment arrays.

    The two lag terms multiply four single-return cosines whose leading X
    return sits one index before the overlap. Its first instance would need
    a return before the sample starts. ``convention="shift"`` reads that X
    return one index later (``n - 2`` summands, all in range);
    ``convention="drop_first"`` keeps the index and drops the first summand.
    """
    (u, v), (u2, v2) = as_point(p), as_point(q)
    n = len(dx)
    if n < 4:
        raise ValueError("need at least 4 increments")
    a, b = dx[:-1], dy[1:]
    t1 = (_cos2(u, v, a, b, dt) * _cos2(u2, v2, a, b, dt)).sum()
    t4 = _cos2(u + u2, v + v2, a, b, dt).sum()
    if convention == "shift":
        lead_x, y1, x1, y2 = dx[0 : n - 2], dy[1 : n - 1], dx[1 : n - 1], dy[2:n]
    elif convention == "drop_first":
        lead_x, y1, x1, y2 = dx[0 : n - 3], dy[2 : n - 1], dx[2 : n - 1], dy[3:n]
    else:
        raise ValueError(f"unknown lag convention {convention!r}")
    t2 = (_cos1(u, lead_x, dt) * _cos1(v, y1, dt) * _cos1(u2, x1, dt) * _cos1(v2, y2, dt)).sum()
    t3 = (_cos1(u2, lead_x, dt) * _cos1(v2, y1, dt) * _cos1(u, x1, dt) * _cos1(v, y2, dt)).sum()
    return float(dt * (t1 + t2 + t3 - 3.0 * t4))


def gamma_hat_v(x: SamplePath, y: SamplePath, cq: CovQuery) -> float:
    dx, dy, dt = synchronous_increments(x, y)
    return gamma_v_stat(dx, dy, dt, cq.p, cq.q)


def gamma_hat_u(x: SamplePath, y: SamplePath, cq: CovQuery, convention: LagConvention = "shift") -> float:
    dx, dy, dt = synchronous_increments(x, y)
    return gamma_u_stat(dx, dy, dt, cq.p, cq.q, convention)


def studentize(estimate: float, truth: float, gamma: float, dt: float, floor: float = GAMMA_FLOOR) -> StudentizedStat:
    """``(estimate - truth) / sqrt(dt * gamma)`` with ``gamma`` floored at ``floor``.

    A non-positive (or NaN) ``gamma`` is floored and the result is marked
    ``flagged`` so callers can report those replications separately.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    flagged = not gamma > 0
    g = floor if flagged else max(gamma, floor)
    z = (estimate - truth) / np.sqrt(dt * g)
    return StudentizedStat(float(z), float(estimate), float(truth), float(g), float(dt), flagged)
