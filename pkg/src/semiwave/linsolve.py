"""Linear delayed PDE  u_t = u_xx + m u_x + p u + q u(t - h, x + d).

Two independent backends:

* :func:`solve_fd`: method of lines with three-point differences and RK4 in
  time (explicit, dt <= 0.4 dx^2).
* :func:`solve_spectral`: discrete Fourier transform in x, each mode being a
  scalar delay equation with sigma = -z^2 + i m z + p, k = q e^{i d z}
  integrated by :mod:`semiwave.halanay`.

On top of them, :func:`verify_decay` and :func:`verify_asymptotic_profile`
measure the sup-norm decay law and the self-similar limit profile.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import halanay
from .charspec import LinearCoefficients, decay_amplitude, gamma_root, sigma_root
from .errors import ConfigError
from .mol import GridSpec, Shift, StencilOperator, march

log = logging.getLogger(__name__)

__all__ = [
    "GridSpec",
    "HistoryField",
    "FieldSeries",
    "DecayFit",
    "solve_fd",
    "solve_spectral",
    "fit_decay",
    "verify_decay",
    "verify_asymptotic_profile",
]


@dataclass
class HistoryField:
    """Initial window of N+1 slices at s = -h, -h + dt, ..., 0."""

    grid: GridSpec
    h: float
    slices: np.ndarray

    def __post_init__(self):
        self.slices = np.asarray(self.slices, dtype=float)
        if self.slices.ndim != 2 or self.slices.shape[1] != self.grid.n or self.slices.shape[0] < 2:
            raise ConfigError(f"history slices must have shape (N+1, {self.grid.n}), got {self.slices.shape}")

    @property
    def n_delay(self) -> int:
        return self.slices.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.h / self.n_delay

    @property
    def s(self) -> np.ndarray:
        return np.linspace(-self.h, 0.0, self.n_delay + 1)

    @property
    def C_u0(self) -> float:
        """sup over s of the L1 norm (rectangle rule)."""
        return float(np.max(np.sum(np.abs(self.slices), axis=1)) * self.grid.dx)

    @classmethod
    def constant(cls, grid: GridSpec, h: float, n_delay: int, profile) -> "HistoryField":
        profile = np.asarray(profile, dtype=float)
        return cls(grid, h, np.repeat(profile[None, :], n_delay + 1, axis=0))

    @classmethod
    def from_function(cls, grid: GridSpec, h: float, n_delay: int, f) -> "HistoryField":
        s = np.linspace(-h, 0.0, n_delay + 1)
        return cls(grid, h, np.stack([np.asarray(f(si, grid.x), dtype=float) for si in s]))

    @classmethod
    def exponential(cls, grid: GridSpec, h: float, n_delay: int, rate: float, profile) -> "HistoryField":
        """u(s, x) = e^{rate s} profile(x)."""
        profile = np.asarray(profile, dtype=float)
        s = np.linspace(-h, 0.0, n_delay + 1)
        return cls(grid, h, np.exp(rate * s)[:, None] * profile[None, :])


@dataclass
class FieldSeries:
    times: np.ndarray
    slices: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def sup(self) -> np.ndarray:
        return np.max(np.abs(self.slices), axis=1)

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not recorded")
        return self.slices[i]


def _output_steps(T: float, dt: float, out_times=None, out_every=None) -> tuple[int, set]:
    n_steps = round(T / dt)
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T={T} is not a multiple of dt={dt}")
    if out_times is not None:
        steps = set()
        for t in out_times:
            k = round(t / dt)
            if abs(k * dt - t) > 1e-9 * max(1.0, t) or k < 0 or k > n_steps:
                raise ConfigError(f"output time {t} is not on the dt grid")
            steps.add(k)
    else:
        every = max(1, round((out_every or T) / dt))
        steps = set(range(0, n_steps + 1, every)) | {n_steps}
    return n_steps, steps


def solve_fd(
    coeffs: LinearCoefficients,
    grid: GridSpec,
    init: HistoryField,
    T: float,
    out_times=None,
    out_every=None,
    weight_rate: float = 0.0,
    midpoint: str = "cubic",
    cfl: float = 0.4,
    allow_interpolated_shift: bool = True,
) -> FieldSeries:
    """Finite-difference method-of-lines solution.

    Time step is the history's h/N and must satisfy dt <= cfl*dx^2. The
    shifted delayed term is read from the ring buffer; a shift that is not a
    multiple of dx is linearly interpolated.
    """
    dt = init.dt
    if abs(init.h - coeffs.h) > 1e-12 * coeffs.h:
        raise ConfigError(f"history spans h={init.h}, coefficients have h={coeffs.h}")
    if dt > cfl * grid.dx**2 * (1 + 1e-12):
        raise ConfigError(f"CFL violation: dt={dt:.3e} > {cfl}*dx^2={cfl * grid.dx**2:.3e}")
    op = StencilOperator(grid, coeffs.m, coeffs.p, weight_rate)
    shift = Shift(grid, coeffs.d, allow_interpolation=allow_interpolated_shift)
    q = coeffs.q

    def forcing(u_del):
        return q * shift(u_del)

    n_steps, keep = _output_steps(T, dt, out_times, out_every)
    times, slices = [], []
    if 0 in keep:
        times.append(0.0)
        slices.append(init.slices[-1].copy())

    def record(n, u):
        if n in keep:
            times.append(n * dt)
            slices.append(u.copy())

    march(init.slices, n_steps, dt, op, forcing, record=record, midpoint=midpoint)
    series = FieldSeries(np.array(times), np.array(slices))
    series.warnings.extend(_boundary_warnings(grid, series))
    return series


def _boundary_warnings(grid: GridSpec, series: FieldSeries, rel: float = 1e-10) -> list[str]:
    # periodic grids stand in for the whole line too, so wrap-around counts
    edge = max(2, grid.n // 50)
    msgs = []
    for t, u in zip(series.times, series.slices):
        top = np.max(np.abs(u))
        if top > 0 and max(np.max(np.abs(u[:edge])), np.max(np.abs(u[-edge:]))) > rel * top:
            msgs.append(f"solution reaches the boundary at t={t:.4g}; widen the domain")
            break
    return msgs


def wavenumbers(grid: GridSpec) -> np.ndarray:
    return 2.0 * np.pi * np.fft.rfftfreq(grid.n, d=grid.dx)


def spectral_symbols(coeffs: LinearCoefficients, grid: GridSpec):
    """Per-mode (sigma, k) for the rfft modes of the grid."""
    z = wavenumbers(grid)
    sigma = -z * z + 1j * coeffs.m * z + coeffs.p
    k = coeffs.q * np.exp(1j * coeffs.d * z)
    return z, sigma, k


def solve_spectral(
    coeffs: LinearCoefficients,
    grid: GridSpec,
    init: HistoryField,
    T: float,
    out_times=None,
    out_every=None,
) -> FieldSeries:
    """Fourier backend; handles any real shift d exactly as a phase."""
    if not grid.periodic:
        raise ConfigError("spectral backend needs a periodic grid")
    if not grid.is_pow2:
        raise ConfigError(f"spectral backend wants n a power of two, got {grid.n}")
    if abs(init.h - coeffs.h) > 1e-12 * coeffs.h:
        raise ConfigError(f"history spans h={init.h}, coefficients have h={coeffs.h}")
    dt = init.dt
    _, sigma, k = spectral_symbols(coeffs, grid)
    hist_hat = np.fft.rfft(init.slices, axis=1)
    n_steps, keep = _output_steps(T, dt, out_times, out_every)
    times, slices = [], []
    if 0 in keep:
        times.append(0.0)
        slices.append(init.slices[-1].copy())

    def record(n, v):
        if n in keep:
            times.append(n * dt)
            slices.append(np.fft.irfft(v, n=grid.n))

    halanay.integrate_modes(sigma, k, dt, hist_hat, n_steps, record)
    series = FieldSeries(np.array(times), np.array(slices))
    series.warnings.extend(_boundary_warnings(grid, series))
    return series


def mode_trajectory(coeffs: LinearCoefficients, grid: GridSpec, init: HistoryField, T: float, mode: int = 0):
    """Trajectory of one Fourier mode as integrated by the spectral backend."""
    dt = init.dt
    _, sigma, k = spectral_symbols(coeffs, grid)
    hist_hat = np.fft.rfft(init.slices, axis=1)[:, mode]
    n_steps, _ = _output_steps(T, dt)
    out = [hist_hat[-1]]
    halanay.integrate_modes(sigma[mode : mode + 1], k[mode : mode + 1], dt, hist_hat[:, None], n_steps,
                            lambda n, v: out.append(v[0]))
    return np.arange(n_steps + 1) * dt, np.array(out)


def solve(coeffs, grid, init, T, backend: str = "spectral", **kw) -> FieldSeries:
    if backend == "spectral":
        return solve_spectral(coeffs, grid, init, T, **kw)
    if backend == "fd":
        return solve_fd(coeffs, grid, init, T, **kw)
    raise ConfigError(f"unknown backend {backend!r}")


# --------------------------------------------------------------------------- #
# Decay law
# --------------------------------------------------------------------------- #


@dataclass
class DecayFit:
    """log sup|u(t)| ~ rate*t + power*log(t) + amplitude."""

    rate: float
    power: float
    amplitude: float
    residual_rms: float
    n_samples: int


def fit_decay(times, sups, h: float, t_min: float | None = None) -> DecayFit:
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sups, dtype=float)
    lo = 0.5 * h if t_min is None else max(t_min, 0.5 * h)
    mask = (times > lo) & (sups > 0)
    if mask.sum() < 20:
        raise ValueError(f"decay fit needs >= 20 samples with t > {lo}, have {int(mask.sum())}")
    t = times[mask]
    y = np.log(sups[mask])
    A = np.column_stack([t, np.log(t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return DecayFit(float(coef[0]), float(coef[1]), float(coef[2]), float(np.sqrt(np.mean(resid**2))), int(mask.sum()))


@dataclass
class DecayReport:
    gamma: float
    eps_h: float
    A0_proof: float
    A0_stated: float
    C_u0: float
    times: np.ndarray
    sup: np.ndarray
    bound: np.ndarray
    fit: DecayFit
    violations: list
    mass: np.ndarray | None = None  # integral of u at each sample

    @property
    def bound_holds(self) -> bool:
        return not self.violations

    @property
    def rate_error(self) -> float:
        return abs(self.fit.rate - self.gamma)

    @property
    def power_error(self) -> float:
        return abs(self.fit.power + 0.5)


def verify_decay(
    coeffs: LinearCoefficients,
    grid: GridSpec,
    init: HistoryField,
    T: float,
    backend: str = "spectral",
    sample_every: float = 0.1,
    fit_from: float | None = None,
) -> DecayReport:
    """Measure sup_x|u(t, x)| against A0 e^{gamma t}/sqrt(t) and fit the decay.

    The fit uses t >= fit_from (default T/4) so the history transient does
    not bias the exponent.
    """
    env = gamma_root(coeffs)
    amp = decay_amplitude(coeffs, init.C_u0)
    series = solve(coeffs, grid, init, T, backend=backend, out_every=sample_every)
    t = series.times
    sup = series.sup
    mask = t > 0.5 * coeffs.h
    bound = np.full_like(sup, np.inf)
    bound[mask] = amp.proof * np.exp(env.gamma * t[mask]) / np.sqrt(t[mask])
    violations = [
        {"t": float(ti), "sup": float(si), "bound": float(bi)}
        for ti, si, bi in zip(t[mask], sup[mask], bound[mask])
        if not si < bi
    ]
    fit = fit_decay(t, sup, coeffs.h, t_min=0.25 * T if fit_from is None else fit_from)
    mass = np.sum(series.slices, axis=1) * grid.dx
    return DecayReport(env.gamma, env.eps_h, amp.proof, amp.stated, init.C_u0, t, sup, bound, fit, violations, mass)


# --------------------------------------------------------------------------- #
# Self-similar limit profile (d = 0)
# --------------------------------------------------------------------------- #


@dataclass
class ProfileReport:
    sigma: float
    limit: np.ndarray  # limit value at each probe
    probes: np.ndarray
    times: np.ndarray
    scaled: np.ndarray  # sqrt(t) e^{-sigma t} u(t, probe), shape (len(times), len(probes))
    rel_error: np.ndarray  # max over probes, per time

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.rel_error) < 0))

    def probe_ratios(self) -> np.ndarray:
        """scaled(x)/scaled(0) at the last time, to compare with e^{-m x/2}."""
        j = int(np.argmin(np.abs(self.probes)))
        return self.scaled[-1] / self.scaled[-1, j]


def limit_profile(coeffs: LinearCoefficients, grid: GridSpec, u0, probes) -> tuple[float, np.ndarray]:
    sigma = sigma_root(coeffs)
    q, h, m = coeffs.q, coeffs.h, coeffs.m
    weight_mass = float(np.sum(np.exp(0.5 * m * grid.x) * np.asarray(u0)) * grid.dx)
    pref = math.sqrt(1.0 + h * q * math.exp(-sigma * h)) / (2.0 * math.sqrt(math.pi))
    return sigma, pref * np.exp(-0.5 * m * np.asarray(probes, dtype=float)) * weight_mass


def verify_asymptotic_profile(
    coeffs: LinearCoefficients,
    grid: GridSpec,
    u0,
    T_list,
    n_delay: int = 64,
    probes=(-2.0, -1.0, 0.0, 1.0, 2.0),
    backend: str = "spectral",
) -> ProfileReport:
    """Compare sqrt(t) e^{-sigma t} u(t, x) with the limit at fixed probes.

    The history is e^{sigma s} u0 so that the zero mode is an exact
    exponential from the start. Probes must be grid points.
    """
    if coeffs.d != 0:
        raise ConfigError("the limit profile is stated for d = 0")
    probes = np.asarray(probes, dtype=float)
    idx = np.rint((probes - grid.x_min) / grid.dx).astype(int)
    if np.any(np.abs(grid.x[idx] - probes) > 1e-9):
        raise ConfigError("probe points must lie on the grid")
    sigma, limit = limit_profile(coeffs, grid, u0, probes)
    init = HistoryField.exponential(grid, coeffs.h, n_delay, sigma, u0)
    T_list = np.asarray(sorted(T_list), dtype=float)
    series = solve(coeffs, grid, init, float(T_list[-1]), backend=backend, out_times=[0.0, *T_list])
    scaled = np.array([np.sqrt(t) * np.exp(-sigma * t) * series.at(t)[idx] for t in T_list])
    rel = np.max(np.abs(scaled / limit[None, :] - 1.0), axis=1)
    return ProfileReport(sigma, limit, probes, T_list, scaled, rel)
