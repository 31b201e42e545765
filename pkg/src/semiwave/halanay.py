"""Scalar complex delay equation r' = sigma r + k r(t - h).

The integrator works on the method of steps: the delayed value is known data
on every step, so with the integrating factor exp(-sigma t) one step is a
quadrature,

    r_{n+1} = E r_n + dt k/6 (E d_n + 4 E^{1/2} d_{n+1/2} + d_{n+1}),
    E = exp(sigma dt),  d_j = r(t_j - h),

which is the classical RK4 step of the transformed equation. It is exact for
k = 0 and stable for every mode with Re(sigma) <= 0, which the spectral
backend of :mod:`semiwave.linsolve` relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charspec import solve_scalar_char
from .delayline import DelayLine
from .errors import ConfigError

MIN_STEPS_PER_DELAY = 16


@dataclass
class ScalarDDE:
    sigma: complex
    k: complex
    h: float
    history: object  # callable s -> complex on [-h, 0], or N+1 samples
    t_end: float
    dt: float

    @property
    def n_delay(self) -> int:
        n = round(self.h / self.dt)
        if n < MIN_STEPS_PER_DELAY or abs(n * self.dt - self.h) > 1e-9 * self.h:
            raise ConfigError(f"dt={self.dt} must equal h/N with integer N >= {MIN_STEPS_PER_DELAY} (h={self.h})")
        return n

    @property
    def n_steps(self) -> int:
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(f"t_end={self.t_end} is not a positive multiple of dt={self.dt}")
        return n

    def history_samples(self) -> np.ndarray:
        n = self.n_delay
        if callable(self.history):
            s = np.linspace(-self.h, 0.0, n + 1)
            return np.array([self.history(si) for si in s], dtype=complex)
        samples = np.asarray(self.history, dtype=complex)
        if samples.shape != (n + 1,):
            raise ConfigError(f"history must have {n + 1} samples, got {samples.shape}")
        return samples


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray


def step_modes(line: DelayLine, n: int, E, E_half, kdt6):
    """Advance every column held by ``line`` from index n to n + 1."""
    N = line.n_delay
    d0 = line[n - N]
    dm = line.midpoint(n - N)
    d1 = line[n - N + 1]
    return E * line[n] + kdt6 * (E * d0 + 4.0 * E_half * dm + d1)


def integrate_modes(sigma, k, dt, history, n_steps: int, record=None):
    """Vectorised core: columns are independent equations sharing N = h/dt.

    ``history`` has shape (N+1, M); sigma, k, dt broadcast against M.
    ``record(n, values)`` is called after every step when given.
    Returns the final (N+1, M) window.
    """
    history = np.asarray(history, dtype=complex)
    n_delay = history.shape[0] - 1
    sigma = np.asarray(sigma, dtype=complex)
    k = np.asarray(k, dtype=complex)
    dt = np.asarray(dt, dtype=float)
    E = np.exp(sigma * dt)
    E_half = np.exp(0.5 * sigma * dt)
    kdt6 = k * dt / 6.0
    line = DelayLine(n_delay, history)
    for n in range(n_steps):
        new = step_modes(line, n, E, E_half, kdt6)
        line.push(new)
        if record is not None:
            record(n + 1, new)
    return line.window()


def integrate_dde(p: ScalarDDE) -> Trajectory:
    """Method-of-steps solution on the grid -h, -h+dt, ..., t_end."""
    N, steps = p.n_delay, p.n_steps
    hist = p.history_samples()
    out = np.empty(N + 1 + steps, dtype=complex)
    out[: N + 1] = hist

    def record(n, v):
        out[N + n] = v[0]

    integrate_modes(np.array([p.sigma]), np.array([p.k]), p.dt, hist[:, None], steps, record)
    times = (np.arange(-N, steps + 1)) * p.dt
    return Trajectory(times=times, values=out)


@dataclass
class HalanayReport:
    lam: float
    prefactor: float
    sup_history: float
    worst_time: float
    worst_ratio: float
    passed: bool
    literal_passed: bool  # same check with prefactor exp(min(0, -lam) h)

    def as_dict(self):
        return dict(self.__dict__)


def halanay_exponent(sigma: complex, k: complex, h: float) -> float:
    return solve_scalar_char(complex(sigma).real, abs(complex(k)), h)


def halanay_bound(lam: float, h: float, sup_hist: float, t):
    """sup|r(s)| exp(max(0, lam) h) exp(lam t).

    The prefactor is what the comparison argument needs for e^{lam s} to
    dominate the history on [-h, 0]; for lam <= 0 it is 1.
    """
    return sup_hist * math.exp(max(0.0, lam) * h) * np.exp(lam * np.asarray(t))


def _report(lam, h, times, values, rtol) -> HalanayReport:
    sup_hist = float(np.max(np.abs(values[times <= 0])))
    mask = times > -h
    t = times[mask]
    absr = np.abs(values[mask])
    bound = halanay_bound(lam, h, sup_hist, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, absr / bound, np.where(absr > 0, np.inf, 0.0))
    i = int(np.argmax(ratio))
    literal = sup_hist * math.exp(min(0.0, -lam) * h) * np.exp(lam * t)
    return HalanayReport(
        lam=lam,
        prefactor=math.exp(max(0.0, lam) * h),
        sup_history=sup_hist,
        worst_time=float(t[i]),
        worst_ratio=float(ratio[i]),
        passed=bool(ratio[i] <= 1.0 + rtol),
        literal_passed=bool(np.all(absr <= literal * (1.0 + rtol))),
    )


def check_halanay(p: ScalarDDE, rtol: float = 1e-6) -> HalanayReport:
    """Integrate and compare |r(t)| with the exponential bound at every grid time."""
    lam = halanay_exponent(p.sigma, p.k, p.h)
    tr = integrate_dde(p)
    return _report(lam, p.h, tr.times, tr.values, rtol)


def check_halanay_many(problems, rtol: float = 1e-6) -> list[HalanayReport]:
    """Batch version of :func:`check_halanay`; problems sharing (N, steps) run together."""
    groups: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(problems):
        groups.setdefault((p.n_delay, p.n_steps), []).append(i)
    reports: list = [None] * len(problems)
    for (N, steps), idx in groups.items():
        ps = [problems[i] for i in idx]
        hist = np.stack([p.history_samples() for p in ps], axis=1)
        out = np.empty((N + 1 + steps, len(ps)), dtype=complex)
        out[: N + 1] = hist

        def record(n, v, out=out, N=N):
            out[N + n] = v

        integrate_modes(
            np.array([p.sigma for p in ps]),
            np.array([p.k for p in ps]),
            np.array([p.dt for p in ps]),
            hist,
            steps,
            record,
        )
        steps_idx = np.arange(-N, steps + 1)
        for col, (i, p) in enumerate(zip(idx, ps)):
            lam = halanay_exponent(p.sigma, p.k, p.h)
            reports[i] = _report(lam, p.h, steps_idx * p.dt, out[:, col], rtol)
    return reports
