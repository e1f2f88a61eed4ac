"""Data-generating processes for bivariate jump-diffusion log-prices.

Volatility factors are either continuous-time Ornstein-Uhlenbeck processes
(advanced with their exact Gaussian transition) or daily AR(1) recursions.
Prices follow an Euler recursion on the observation grid with optional
compound-Poisson or symmetric alpha-stable jumps.

Every sampler takes an explicit ``numpy.random.Generator``; nothing here
touches global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "SimGrid",
    "OuExpVolSpec",
    "Ar1VolSpec",
    "JumpSpec",
    "BivariateModelSpec",
    "VolPath",
    "SamplePath",
    "stream",
    "simulate_ou_exp_vol",
    "ar1_innovations",
    "simulate_ar1_factors",
    "simulate_ar1_vol",
    "simulate_vol",
    "simulate_prices",
    "simulate_paths",
    "simulate_async_paths",
    "sample_alpha_stable",
    "sample_alpha_stable_increments",
    "sample_compound_poisson",
    "sample_poisson_observation_times",
    "true_elt",
]


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, *keys)``.

    The same key always yields the same stream, no matter in which order or
    in which process the streams are created.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SimGrid:
    """Uniform grid ``t_i = i * dt`` on ``[0, t_end]``."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @classmethod
    def daily(cls, n_days: int, steps_per_day: int) -> "SimGrid":
        return cls(float(n_days), int(n_days) * int(steps_per_day))


@dataclass(frozen=True)
class OuExpVolSpec:
    """``sigma_t = exp(a + b * tau_t)`` with ``d tau = -kappa tau dt + dB``."""

    kappa: float
    a: float
    b: float
    tau0: float = 0.0
    stationary_init: bool = False

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class Ar1VolSpec:
    """Daily AR(1) factors driving both volatilities.

    ``tau_x[t] = phi_x tau_x[t-1] + eps_x[t]``, ``tau_y[t] = phi_y tau_y[t-1] + eps_y[t]``
    with ``eps_y = rho_prime eps_x + sqrt(1 - rho_prime**2) eps_star``. The spot
    volatilities are ``exp(a + b tau)`` and stay constant within a day.
    """

    phi_x: float
    phi_y: float
    rho_prime: float
    a_x: float
    b_x: float
    a_y: float
    b_y: float
    tau0_x: float = 0.0
    tau0_y: float = 0.0
    stationary_init: bool = False

    def __post_init__(self):
        if not (abs(self.phi_x) < 1 and abs(self.phi_y) < 1):
            raise ValueError("AR(1) coefficients must satisfy |phi| < 1")
        if abs(self.rho_prime) > 1:
            raise ValueError(f"|rho_prime| must be <= 1, got {self.rho_prime}")


JumpKind = Literal["none", "compound_poisson", "alpha_stable"]


@dataclass(frozen=True)
class JumpSpec:
    kind: JumpKind = "none"
    intensity: float = 0.0  # jumps per unit time
    size_sd: float = 1.0
    alpha: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "compound_poisson", "alpha_stable"):
            raise ValueError(f"unknown jump kind {self.kind!r}")
        if self.intensity < 0:
            raise ValueError("jump intensity must be >= 0")
        if self.kind == "alpha_stable":
            # finite-variation jumps only
            if not 0 < self.alpha < 1:
                raise ValueError(f"stable index must lie in (0, 1), got {self.alpha}")
            if self.scale < 0:
                raise ValueError("stable scale must be >= 0")

    @classmethod
    def none(cls) -> "JumpSpec":
        return cls("none")

    @classmethod
    def compound_poisson(cls, intensity: float, size_sd: float = 1.0) -> "JumpSpec":
        return cls("compound_poisson", intensity=intensity, size_sd=size_sd)

    @classmethod
    def alpha_stable(cls, alpha: float, scale: float = 1.0) -> "JumpSpec":
        return cls("alpha_stable", alpha=alpha, scale=scale)


@dataclass(frozen=True)
class BivariateModelSpec:
    """Drifts, Brownian correlation, volatility law and jump law of ``(X, Y)``.

    Exactly one volatility form is set: either the pair ``vol_x``/``vol_y``
    (independent exponential-OU factors) or ``ar1`` (joint daily AR(1)).
    """

    drift_x: float = 0.0
    drift_y: float = 0.0
    rho: float = 0.0
    vol_x: OuExpVolSpec | None = None
    vol_y: OuExpVolSpec | None = None
    ar1: Ar1VolSpec | None = None
    jump_x: JumpSpec = field(default_factory=JumpSpec)
    jump_y: JumpSpec = field(default_factory=JumpSpec)

    def __post_init__(self):
        if abs(self.rho) > 1:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")
        ou = self.vol_x is not None and self.vol_y is not None
        if ou == (self.ar1 is not None):
            raise ValueError("set either vol_x and vol_y, or ar1 (not both)")


@dataclass(frozen=True)
class VolPath:
    """Spot volatilities at the simulation nodes.

    ``sigma_x[i]`` is the value at ``times[i]`` and drives the increment over
    ``(times[i], times[i + 1]]``.
    """

    times: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if len(self.sigma_x) != n or len(self.sigma_y) != n:
            raise ValueError("sigma arrays must match the time nodes")

    @property
    def t_end(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def grid(self) -> SimGrid | None:
        """The uniform grid the path lives on, or ``None`` for irregular nodes."""
        dts = np.diff(self.times)
        if np.allclose(dts, dts[0], rtol=1e-9, atol=0):
            return SimGrid(self.t_end, len(dts))
        return None


@dataclass(frozen=True)
class SamplePath:
    """Observed log-price series."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", x)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if len(t) < 3:
            raise ValueError("a sample path needs at least 3 observations")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValueError("observation times must be >= 0 and strictly increasing")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self) -> int:
        return len(self.times)


# -- volatility -------------------------------------------------------------


def _node_times(grid: SimGrid | Sequence[float] | np.ndarray) -> tuple[np.ndarray, bool]:
    if isinstance(grid, SimGrid):
        return grid.times, True
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("node times must be strictly increasing")
    return t, False


def simulate_ou_exp_vol(
    spec: OuExpVolSpec,
    grid: SimGrid | np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exponential-OU spot volatility at every grid node.

    The factor is advanced with the exact transition
    ``tau' = exp(-kappa dt) tau + sqrt((1 - exp(-2 kappa dt)) / (2 kappa)) Z``,
    so the result carries no discretisation error in ``tau`` for any step
    size. ``grid`` may also be an increasing array of node times.

    Returns
    -------
    numpy.ndarray
        ``exp(a + b * tau)`` with one entry per node.
    """
    if not spec.kappa > 0:
        raise ValueError("kappa must be positive")
    times, uniform = _node_times(grid)
    tau0 = spec.tau0
    if spec.stationary_init:
        tau0 = rng.standard_normal() / np.sqrt(2.0 * spec.kappa)
    z = rng.standard_normal(len(times) - 1)
    dts = np.diff(times)
    if uniform:
        phi = np.exp(-spec.kappa * dts[0])
        sd = np.sqrt(-np.expm1(-2.0 * spec.kappa * dts[0]) / (2.0 * spec.kappa))
        e = np.concatenate(([tau0], sd * z))
        tau = lfilter([1.0], [1.0, -phi], e)
    else:
        phis = np.exp(-spec.kappa * dts)
        sds = np.sqrt(-np.expm1(-2.0 * spec.kappa * dts) / (2.0 * spec.kappa))
        tau = np.empty(len(times))
        tau[0] = cur = tau0
        for i, (ph, s, zi) in enumerate(zip(phis.tolist(), sds.tolist(), z.tolist()), 1):
            cur = ph * cur + s * zi
            tau[i] = cur
    return np.exp(spec.a + spec.b * tau)


def ar1_innovations(rho_prime: float, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Standard normal pairs with correlation ``rho_prime``."""
    if abs(rho_prime) > 1:
        raise ValueError("|rho_prime| must be <= 1")
    e = rng.standard_normal((2, n))
    eps_x = e[0]
    eps_y = rho_prime * eps_x + np.sqrt(1.0 - rho_prime**2) * e[1]
    return eps_x, eps_y


def simulate_ar1_factors(
    spec: Ar1VolSpec, n_days: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Daily factors ``tau[1..n_days]`` (day ``t`` covers ``(t-1, t]``)."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    if spec.stationary_init:
        vx = 1.0 / (1.0 - spec.phi_x**2)
        vy = 1.0 / (1.0 - spec.phi_y**2)
        cxy = spec.rho_prime / (1.0 - spec.phi_x * spec.phi_y)
        z = rng.standard_normal(2)
        t0x = np.sqrt(vx) * z[0]
        t0y = cxy / vx * t0x + np.sqrt(max(vy - cxy**2 / vx, 0.0)) * z[1]
    else:
        t0x, t0y = spec.tau0_x, spec.tau0_y
    eps_x, eps_y = ar1_innovations(spec.rho_prime, n_days, rng)
    tau_x = lfilter([1.0], [1.0, -spec.phi_x], eps_x, zi=[spec.phi_x * t0x])[0]
    tau_y = lfilter([1.0], [1.0, -spec.phi_y], eps_y, zi=[spec.phi_y * t0y])[0]
    return tau_x, tau_y


def simulate_ar1_vol(
    spec: Ar1VolSpec, n_days: int, steps_per_day: int, rng: np.random.Generator
) -> VolPath:
    """Volatilities that are piecewise constant within each day."""
    if steps_per_day < 1:
        raise ValueError("steps_per_day must be >= 1")
    tau_x, tau_y = simulate_ar1_factors(spec, n_days, rng)
    sx_day = np.exp(spec.a_x + spec.b_x * tau_x)
    sy_day = np.exp(spec.a_y + spec.b_y * tau_y)
    # node i in [(d-1)m, dm) drives an increment inside day d; the terminal node repeats the last day
    sx = np.append(np.repeat(sx_day, steps_per_day), sx_day[-1])
    sy = np.append(np.repeat(sy_day, steps_per_day), sy_day[-1])
    grid = SimGrid.daily(n_days, steps_per_day)
    return VolPath(grid.times, sx, sy)


def simulate_vol(
    model: BivariateModelSpec, grid: SimGrid | np.ndarray, rng: np.random.Generator
) -> VolPath:
    """Dispatch to the volatility law declared in ``model``."""
    if model.ar1 is not None:
        if not isinstance(grid, SimGrid):
            raise ValueError("AR(1) volatility needs a uniform daily grid")
        m = grid.n_steps / grid.t_end
        if abs(grid.t_end - round(grid.t_end)) > 1e-9 or abs(m - round(m)) > 1e-9:
            raise ValueError("AR(1) volatility needs an integer number of days and steps per day")
        return simulate_ar1_vol(model.ar1, int(round(grid.t_end)), int(round(m)), rng)
    times, _ = _node_times(grid)
    sx = simulate_ou_exp_vol(model.vol_x, grid, rng)
    sy = simulate_ou_exp_vol(model.vol_y, grid, rng)
    return VolPath(times, sx, sy)


# -- jumps and observation times ------------------------------------------


def sample_alpha_stable(alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric alpha-stable draws via Chambers-Mallows-Stuck.

    The characteristic function is ``exp(-|t|**alpha)``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u = rng.uniform(-np.pi / 2, np.pi / 2, n)
    w = rng.exponential(1.0, n)
    return (
        np.sin(alpha * u)
        / np.cos(u) ** (1.0 / alpha)
        * (np.cos(u - alpha * u) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_alpha_stable_increments(
    alpha: float,
    scale: float,
    n: int,
    dt: float | np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Increments of a symmetric alpha-stable Levy process over steps ``dt``.

    Each increment is ``scale * dt**(1/alpha) * S`` with ``S`` standard
    symmetric stable. ``dt`` may be a scalar or one step length per draw.
    """
    s = sample_alpha_stable(alpha, n, rng)
    return scale * np.asarray(dt, dtype=float) ** (1.0 / alpha) * s


def sample_compound_poisson(
    intensity: float, size_sd: float, t_span: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Jump times (sorted, uniform on ``[0, t_span]``) and Gaussian jump sizes."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    k = rng.poisson(intensity * t_span) if intensity > 0 else 0
    times = np.sort(rng.uniform(0.0, t_span, k))
    sizes = size_sd * rng.standard_normal(k)
    return times, sizes


def sample_poisson_observation_times(
    intensity_per_span: float, t_span: float, rng: np.random.Generator
) -> np.ndarray:
    """Homogeneous Poisson event times on ``[0, t_span]`` with ``0`` prepended.

    ``intensity_per_span`` is the expected number of events over the whole
    span. Raises ``RuntimeError`` when no event is drawn; callers may retry
    with the next draw from the same generator.
    """
    if not intensity_per_span > 0:
        raise ValueError("intensity_per_span must be positive")
    k = rng.poisson(intensity_per_span)
    if k == 0:
        raise RuntimeError("no observation times drawn")
    t = np.sort(rng.uniform(0.0, t_span, k))
    t = t[t > 0.0]
    return np.concatenate(([0.0], t))


def _jump_increments(spec: JumpSpec, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(times) - 1
    if spec.kind == "none":
        return np.zeros(n)
    if spec.kind == "compound_poisson":
        t0, t1 = times[0], times[-1]
        jt, js = sample_compound_poisson(spec.intensity, spec.size_sd, t1 - t0, rng)
        out = np.zeros(n)
        # a jump at s lands in the increment over (t_{i-1}, t_i] containing s
        idx = np.clip(np.searchsorted(times, t0 + jt, side="left") - 1, 0, n - 1)
        np.add.at(out, idx, js)
        return out
    return sample_alpha_stable_increments(spec.alpha, spec.scale, n, np.diff(times), rng)


def simulate_prices(
    model: BivariateModelSpec, vol: VolPath, rng: np.random.Generator
) -> tuple[SamplePath, SamplePath]:
    """Euler recursion for ``(X, Y)`` on the nodes of ``vol``.

    ``dX_i = b_x dt_i + sigma_x[i-1] dW_x_i + J_x_i`` and likewise for ``Y``,
    with ``dW_y = rho dW_x + sqrt(1 - rho^2) dW_star``. Both paths start at 0.
    """
    times = vol.times
    dts = np.diff(times)
    z = rng.standard_normal((2, len(dts)))
    sq = np.sqrt(dts)
    dwx = sq * z[0]
    dwy = model.rho * dwx + np.sqrt(1.0 - model.rho**2) * sq * z[1]
    dx = model.drift_x * dts + vol.sigma_x[:-1] * dwx
    dy = model.drift_y * dts + vol.sigma_y[:-1] * dwy
    dx = dx + _jump_increments(model.jump_x, times, rng)
    dy = dy + _jump_increments(model.jump_y, times, rng)
    x = np.concatenate(([0.0], np.cumsum(dx)))
    y = np.concatenate(([0.0], np.cumsum(dy)))
    return SamplePath(times, x), SamplePath(times, y)


def simulate_paths(
    model: BivariateModelSpec, grid: SimGrid, rng: np.random.Generator
) -> tuple[SamplePath, SamplePath, VolPath]:
    """Volatility then prices on one uniform grid."""
    vol = simulate_vol(model, grid, rng)
    x, y = simulate_prices(model, vol, rng)
    return x, y, vol


def simulate_async_paths(
    model: BivariateModelSpec,
    t_end: float,
    mean_obs_x: float,
    mean_obs_y: float | None,
    rng: np.random.Generator,
    max_tries: int = 100,
) -> tuple[SamplePath, SamplePath, VolPath]:
    """Prices observed at independent Poisson times.

    The process is simulated on the union of both observation grids plus
    ``t_end`` (so the latent integral covers the full span); each series is
    then read off at its own times. ``mean_obs_y=None`` reuses the X sampling
    times, which makes the data synchronous but irregular.
    """
    if model.ar1 is not None:
        raise ValueError("asynchronous sampling is only set up for OU volatility")

    def draw(mean):
        for _ in range(max_tries):
            try:
                t = sample_poisson_observation_times(mean, t_end, rng)
            except RuntimeError:
                continue
            if len(t) >= 3:
                return t
        raise RuntimeError("could not draw enough observation times")

    tx = draw(mean_obs_x)
    ty = tx if mean_obs_y is None else draw(mean_obs_y)
    nodes = np.union1d(np.union1d(tx, ty), [t_end])
    vol = simulate_vol(model, nodes, rng)
    x, y = simulate_prices(model, vol, rng)
    ix = np.searchsorted(nodes, tx)
    iy = np.searchsorted(nodes, ty)
    return SamplePath(tx, x.values[ix]), SamplePath(ty, y.values[iy]), vol


# -- latent target ---------------------------------------------------------


def true_elt(vol: VolPath, u, v):
    """Left-endpoint Riemann sum of ``exp(-u sigma_x^2 - v sigma_y^2)`` over the path.

    ``u`` and ``v`` broadcast against each other; the result has their
    broadcast shape.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("Laplace arguments must be nonnegative")
    dts = np.diff(vol.times)
    sx2 = vol.sigma_x[:-1] ** 2
    sy2 = vol.sigma_y[:-1] ** 2
    uu, vv = np.broadcast_arrays(u, v)
    expo = np.exp(-np.multiply.outer(uu, sx2) - np.multiply.outer(vv, sy2))
    out = expo @ dts
    return float(out) if out.ndim == 0 else out
