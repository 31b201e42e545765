"""Delayed reaction-diffusion fronts in the co-moving frame z = x + ct:

    v_t = v_zz - c v_z - v + g(v(t - h, z - ch)).

The left edge is Dirichlet 0 (the front's leading edge), the right edge
Neumann 0. Time stepping is the delayed-forcing RK4 of :mod:`semiwave.mol`
with linear midpoint values and dt|a_0| <= 2/3, which makes the discrete
scheme order preserving: comparison and majorization arguments hold exactly
on the grid, not just up to truncation error.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .birthfuncs import (
    BirthFunction,
    g_star_plus,
    interval_data,
    kappa,
    lipschitz_global,
)
from .charspec import LinearCoefficients, gamma0_solve, gamma_root, speed_data, speed_threshold
from .errors import ConfigError, DomainError, NumericalError
from .linsolve import FieldSeries, HistoryField, fit_decay, solve_fd
from .mol import GridSpec, Shift, StencilOperator, march, monotone_dt_limit

DEFAULT_CFL = 0.3
DEFAULT_DX = 0.1
ULP_SLACK = 64.0


def comoving_grid(c: float, h: float, z_min: float, z_max: float, dx0: float = DEFAULT_DX) -> GridSpec:
    """Grid with z = 0 on a node and ch an integer number of cells."""
    if c <= 0 or h <= 0:
        raise ConfigError(f"need c > 0 and h > 0, got c={c}, h={h}")
    k = max(1, round(c * h / dx0))
    dx = c * h / k
    i_lo = math.floor(z_min / dx)
    i_hi = math.ceil(z_max / dx)
    return GridSpec(i_lo * dx, i_hi * dx, i_hi - i_lo, periodic=False, left="dirichlet", right="neumann")


def n_delay_for(h: float, grid: GridSpec, cfl: float = DEFAULT_CFL) -> int:
    """Steps per delay with dt <= cfl dx^2 and inside the order-preserving limit."""
    op = StencilOperator(grid, 0.0, -1.0)
    dt_max = min(cfl * grid.dx**2, monotone_dt_limit(op))
    return max(1, math.ceil(h / dt_max - 1e-12))


@dataclass
class ComovingProblem:
    bf: BirthFunction
    c: float
    h: float
    grid: GridSpec
    history: HistoryField
    allow_interpolated_shift: bool = False
    guard_max: float | None = None

    def __post_init__(self):
        if self.c <= 0 or self.h <= 0:
            raise ConfigError(f"need c > 0 and h > 0, got c={self.c}, h={self.h}")
        if self.grid.periodic:
            raise ConfigError("co-moving runs need a bounded grid (Dirichlet left, Neumann right)")
        if abs(self.history.h - self.h) > 1e-12 * self.h:
            raise ConfigError(f"history spans h={self.history.h}, problem has h={self.h}")
        if self.history.dt > monotone_dt_limit(self.operator()) * (1 + 1e-12):
            raise ConfigError(f"dt={self.history.dt:.3e} exceeds the order-preserving limit")

    @property
    def shift_cells(self) -> float:
        return self.c * self.h / self.grid.dx

    def operator(self) -> StencilOperator:
        return StencilOperator(self.grid, -self.c, -1.0)

    def shift(self) -> Shift:
        return Shift(self.grid, -self.c * self.h, allow_interpolation=self.allow_interpolated_shift)

    def bound(self) -> float:
        if self.guard_max is not None:
            return self.guard_max
        top = float(np.max(self.history.slices))
        try:
            top = max(top, interval_data(self.bf).zeta2)
        except DomainError:
            pass
        return top + 1.0


@dataclass
class ComovingSeries(FieldSeries):
    final: np.ndarray | None = None  # last (N+1, ...) window, to continue a run


def _run(prob: ComovingProblem, slices, n_steps: int, keep=(), record=None, guard=True):
    """March the raw window ``slices`` (N+1, ..., n); returns the final DelayLine."""
    op = prob.operator()
    shift = prob.shift()
    g = prob.bf.g
    dt = prob.h / (slices.shape[0] - 1)
    top = prob.bound()
    nonneg = bool(np.min(slices) >= 0)

    def forcing(vd):
        return g(shift(vd))

    def check(n, u):
        if n % 32 and n != n_steps:
            return
        if not np.all(np.isfinite(u)) or np.max(u) > top or (nonneg and np.min(u) < -1e-12 * top):
            raise NumericalError(
                f"blow-up guard: values left [0, {top:.4g}] near t={n * dt:.6g}", last_time=max(0, n - 32) * dt
            )

    return march(slices, n_steps, dt, op, forcing, record=record, midpoint="linear", guard=check if guard else None)


def _steps(T: float, dt: float) -> int:
    n = round(T / dt)
    if n < 0 or abs(n * dt - T) > 1e-9 * max(1.0, T) + 0.5 * dt:
        raise ConfigError(f"T={T} is not a multiple of dt={dt}")
    return n


def solve_comoving(prob: ComovingProblem, T: float, out_every: float | None = None, slices=None) -> ComovingSeries:
    """Method-of-lines solution; records every ``out_every`` (default: only t = T)."""
    slices = prob.history.slices if slices is None else np.asarray(slices, dtype=float)
    dt = prob.history.dt
    n_steps = _steps(T, dt)
    every = n_steps if not out_every else max(1, round(out_every / dt))
    times, out = [0.0], [slices[-1].copy()]

    def record(n, u):
        if n % every == 0 or n == n_steps:
            times.append(n * dt)
            out.append(u.copy())

    line = _run(prob, slices, n_steps, record=record)
    return ComovingSeries(np.array(times), np.array(out), final=line.window())


def solve_lab(bf: BirthFunction, h: float, grid: GridSpec, history: HistoryField, T: float,
              out_every: float | None = None) -> FieldSeries:
    """u_t = u_xx - u + g(u(t - h, x)) in the lab frame (no delayed shift)."""
    if abs(history.h - h) > 1e-12 * h:
        raise ConfigError(f"history spans h={history.h}, problem has h={h}")
    op = StencilOperator(grid, 0.0, -1.0)
    dt = history.dt
    if dt > monotone_dt_limit(op) * (1 + 1e-12):
        raise ConfigError(f"dt={dt:.3e} exceeds the order-preserving limit")
    n_steps = _steps(T, dt)
    every = n_steps if not out_every else max(1, round(out_every / dt))
    times, out = [0.0], [history.slices[-1].copy()]

    def record(n, u):
        if n % every == 0 or n == n_steps:
            times.append(n * dt)
            out.append(u.copy())

    def check(n, u):
        if n % 32 == 0 and not np.all(np.isfinite(u)):
            raise NumericalError(f"non-finite values near t={n * dt:.6g}", last_time=max(0, n - 32) * dt)

    march(history.slices, n_steps, dt, op, bf.g, record=record, midpoint="linear", guard=check)
    return FieldSeries(np.array(times), np.array(out))


# --------------------------------------------------------------------------- #
# Profiles
# --------------------------------------------------------------------------- #


def anchor_position(z, psi, level: float) -> float:
    """First upcrossing of ``level`` from the left, linearly interpolated."""
    above = np.nonzero(psi >= level)[0]
    if above.size == 0:
        raise NumericalError(f"profile never reaches the anchor level {level:.4g}")
    i = int(above[0])
    if i == 0:
        return float(z[0])
    a, b = psi[i - 1], psi[i]
    return float(z[i - 1] + (level - a) / (b - a) * (z[i] - z[i - 1]))


def anchored(z, psi, level: float):
    """psi resampled so its anchor sits at z = 0."""
    zs = anchor_position(z, psi, level)
    return np.interp(z + zs, z, psi, left=0.0, right=psi[-1])


def _shift_cells(window, k: int):
    """Translate every slice by k cells toward the left (u(z) -> u(z + k dx))."""
    if k == 0:
        return window
    out = np.empty_like(window)
    n = window.shape[-1]
    if k > 0:
        out[..., : n - k] = window[..., k:]
        out[..., n - k :] = window[..., -1:]
    else:
        out[..., -k:] = window[..., : n + k]
        out[..., :-k] = 0.0
    return out


def profile_residual(psi, bf: BirthFunction, c: float, h: float, dx: float) -> np.ndarray:
    """psi'' - c psi' - psi + g(psi(z - ch)) with three-point differences.

    Ghosts: 0 on the left, mirrored on the right; values left of the grid are 0.
    """
    k = round(c * h / dx)
    ext = np.concatenate(([0.0], psi, [psi[-2]]))
    d2 = (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / dx**2
    d1 = (ext[2:] - ext[:-2]) / (2.0 * dx)
    delayed = np.concatenate((np.zeros(k), psi[: len(psi) - k]))
    return d2 - c * d1 - psi + bf.g(delayed)


def _newton_polish(bf, c, h, grid, seed, i0, level, weight_rate=0.0, max_iter=12, phase_weight=100.0):
    """Gauss-Newton for the stationary discrete equation plus psi[i0] = level.

    With the Dirichlet and Neumann rows and the phase row the system is
    overdetermined by one but consistent to rounding (the translation mode
    is only broken at the far edges), so it is solved in the least-squares
    sense through sparse normal equations. ``weight_rate`` > 0 scales rows
    and unknowns on z <= 0 by e^{-weight_rate z}; near lambda_1 this makes
    the system close to singular, so the default is the plain problem.
    """
    n = grid.n
    dx = grid.dx
    K = round(c * h / dx)
    op = StencilOperator(grid, -c, -1.0)
    A = sp.diags([np.full(n - 1, op.a_m), np.full(n, op.a_0), np.full(n - 1, op.a_p)], [-1, 0, 1], format="lil")
    A[n - 1, n - 2] = op.a_m + op.a_p  # Neumann ghost
    A = A.tocsr()
    S = sp.eye(n, n, k=-K, format="csr")
    row = sp.csr_matrix(([phase_weight], ([0], [i0])), shape=(1, n))

    def residual(psi):
        Spsi = np.concatenate((np.zeros(K), psi[: n - K]))
        return op(psi) + bf.g(Spsi), Spsi

    w = np.exp(-weight_rate * np.minimum(grid.x, 0.0))
    W = sp.diags(np.append(w, 1.0))
    Winv = sp.diags(1.0 / w)
    psi = seed.copy()
    F, Spsi = residual(psi)
    it = 0
    for it in range(1, max_iter + 1):
        M = (W @ sp.vstack([A + sp.diags(bf.dg(Spsi)) @ S, row]) @ Winv).tocsc()
        rhs = np.append(-w * F, phase_weight * (level - psi[i0]) * w[i0])
        step = spsolve((M.T @ M).tocsc(), M.T @ rhs) / w
        psi = psi + step
        F, Spsi = residual(psi)
        if np.max(np.abs(w * step)) < 1e-13 * max(1.0, np.max(np.abs(psi))):
            break
    return psi, it, float(np.max(np.abs(F)))


@dataclass
class WaveProfile:
    c: float
    h: float
    lambda_c: float
    lambda1: float
    lambda2: float
    kappa: float
    grid: GridSpec
    n_delay: int
    psi: np.ndarray
    anchor: float
    converged: bool
    weighted_converged: bool
    change: float  # sup |psi(t+dt_chunk) - psi(t)| / dt_chunk after the final chunk
    weighted_change: float
    residual: float
    left_tail_max: float
    right_range: tuple
    is_wavefront: bool
    relax_time: float = 0.0
    newton_steps: int = 0
    pre_polish_change: float = math.nan
    warnings: list = field(default_factory=list)
    relaxed: np.ndarray | None = None  # state before the Newton polish

    @property
    def z(self) -> np.ndarray:
        return self.grid.x

    @property
    def tail_ok(self) -> bool:
        return self.left_tail_max < 1e-8 * self.kappa

    def at(self, z):
        return np.interp(z, self.z, self.psi, left=0.0, right=self.psi[-1])

    def history(self) -> HistoryField:
        return HistoryField.constant(self.grid, self.h, self.n_delay, self.psi)

    def problem(self, bf: BirthFunction, history: HistoryField | None = None, **kw) -> ComovingProblem:
        return ComovingProblem(bf, self.c, self.h, self.grid, history or self.history(), **kw)

    def summary(self) -> dict:
        keys = ("c", "h", "lambda_c", "lambda1", "lambda2", "kappa", "anchor", "converged", "weighted_converged",
                "change", "weighted_change", "residual", "left_tail_max", "right_range", "is_wavefront",
                "relax_time", "newton_steps", "pre_polish_change", "warnings", "n_delay")
        d = {k: getattr(self, k) for k in keys}
        d.update(dx=self.grid.dx, z_min=self.grid.x_min, z_max=self.grid.x_max, n=self.grid.n)
        return d


def default_window(lam1: float, z_max: float = 30.0) -> tuple[float, float]:
    """z_min putting the leftmost 10% of the grid where e^{lam1 z} < 1e-10."""
    z_edge = -(math.log(1e10) + 2.0) / lam1
    return (z_edge - 0.1 * z_max) / 0.9, z_max


def logistic_datum(k: float, rate: float, z0: float = 0.0):
    """kappa / (1 + e^{-rate (z - z0)}), a tanh step with tail e^{rate z}."""
    return lambda z: k * 0.5 * (1.0 + np.tanh(0.5 * rate * (np.asarray(z) - z0)))


def ramp_datum(k: float, left: float = -3.0, right: float = 3.0):
    """Piecewise-linear step: 0 left of ``left``, kappa right of ``right``."""
    return lambda z: k * np.clip((np.asarray(z) - left) / (right - left), 0.0, 1.0)


def compute_profile(
    bf: BirthFunction,
    c: float,
    h: float,
    grid: GridSpec | None = None,
    *,
    datum=None,
    lambda_c="lambda1",
    dx0: float = DEFAULT_DX,
    z_max: float = 60.0,
    relax_time: float = 30.0,
    chunk: float = 1.0,
    tol: float = 1e-8,
    polish: bool = True,
    cfl: float = DEFAULT_CFL,
) -> WaveProfile:
    """Semi-wavefront of speed c by relaxation, anchored at the kappa/2 upcrossing.

    The datum relaxes for ``relax_time`` in chunks; after each chunk the state
    is moved by whole cells so the anchor stays near z = 0. If the anchored
    change has not dropped below ``tol`` per unit time, the last state seeds a
    Newton solve of the stationary discrete equation. Either way the result is
    certified by one more chunk of time stepping from the final profile.
    """
    k = kappa(bf)
    notes = []
    g0 = float(bf.dg(0.0))
    sd = speed_data(c, g0, h, lambda_c)
    gsp = g_star_plus(bf)
    if gsp > 1 and c <= speed_threshold(gsp, h):
        msg = f"c={c:.6g} <= c(g*+)={speed_threshold(gsp, h):.6g}: a semi-wavefront is not guaranteed"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    if grid is None:
        grid = comoving_grid(c, h, *default_window(sd.lambda1, z_max), dx0)
    N = n_delay_for(h, grid, cfl)
    z = grid.x
    i0 = int(np.argmin(np.abs(z)))
    level = 0.5 * k
    datum = datum or logistic_datum(k, sd.lambda1)
    u0 = np.asarray(datum(z), dtype=float)
    hist = HistoryField.constant(grid, h, N, u0)
    prob = ComovingProblem(bf, c, h, grid, hist)
    dt = hist.dt
    n_chunk = max(1, round(chunk / dt))
    dT = n_chunk * dt

    window = hist.slices
    prev = anchored(z, window[-1], level)
    change = math.inf
    t = 0.0
    while t < relax_time - 1e-12:
        window = _run(prob, window, n_chunk).window()
        t += dT
        shift = round(anchor_position(z, window[-1], level) / grid.dx)
        window = _shift_cells(window, shift)
        cur = anchored(z, window[-1], level)
        change = float(np.max(np.abs(cur - prev))) / dT
        prev = cur
        if change < tol:
            break
    pre_change = change
    psi = window[-1].copy()
    relaxed = psi.copy()
    steps = 0
    if polish and change >= tol:
        psi, steps, res = _newton_polish(bf, c, h, grid, psi, i0, level)
        if res > 1e-9:
            notes.append(f"Newton polish stalled: residual {res:.3e}")

    # certify: one chunk of time stepping from the final profile
    # (raw difference: resampling to a moved anchor would zero-fill the far-left node)
    after = _run(prob, np.repeat(psi[None, :], N + 1, axis=0), n_chunk).current.copy()
    diff = np.abs(after - psi) / dT
    change = float(np.max(diff))
    left = z <= 0
    wchange = float(np.max(sd.xi(z[left]) * diff[left]))

    anchor = anchor_position(z, psi, level)
    resid = float(np.max(np.abs(profile_residual(psi, bf, c, h, grid.dx))))
    n_tail = max(1, grid.n // 10)
    right = z >= 0.5 * z[-1]
    rr = (float(np.min(psi[right])), float(np.max(psi[right])))
    tail = psi[-n_tail:]
    return WaveProfile(
        c=c, h=h, lambda_c=sd.lambda_c, lambda1=sd.lambda1, lambda2=sd.lambda2, kappa=k,
        grid=grid, n_delay=N, psi=psi, anchor=anchor,
        converged=change < tol, weighted_converged=wchange < tol,
        change=change, weighted_change=wchange, residual=resid,
        left_tail_max=float(np.max(np.abs(psi[:n_tail]))), right_range=rr,
        is_wavefront=bool(np.max(np.abs(tail - k)) < 1e-6 * max(1.0, k)),
        relax_time=t, newton_steps=steps, pre_polish_change=pre_change, warnings=notes, relaxed=relaxed,
    )


def range_check(profile: WaveProfile, lo: float, hi: float, tol: float = 1e-3) -> dict:
    """Right-half values against [lo, hi]: the settled part of the front."""
    a, b = profile.right_range
    return {"min": a, "max": b, "lo": lo, "hi": hi, "tol": tol, "passed": bool(a >= lo - tol and b <= hi + tol)}


# --------------------------------------------------------------------------- #
# Perturbations
# --------------------------------------------------------------------------- #


class PerturbationShape(str, enum.Enum):
    ETA_WEIGHTED = "eta_weighted"
    COMPACT_BUMP = "compact_bump"
    TAIL_SEEDED = "tail_seeded"


@dataclass
class PerturbationSpec:
    q_amp: float
    b: float
    shape: PerturbationShape = PerturbationShape.COMPACT_BUMP
    center: float | None = None  # bump centre, default b
    width: float = 2.0  # bump half width

    def __post_init__(self):
        self.shape = PerturbationShape(self.shape)
        if self.q_amp < 0:
            raise ConfigError(f"q_amp must be >= 0, got {self.q_amp}")

    def eta(self, z, lam):
        return np.minimum(1.0, np.exp(lam * (np.asarray(z) - self.b)))

    def profile(self, z, lam) -> np.ndarray:
        """Nonnegative perturbation with |v0 - psi0| <= q_amp eta_b."""
        z = np.asarray(z, dtype=float)
        eta = self.eta(z, lam)
        if self.shape is PerturbationShape.ETA_WEIGHTED:
            return self.q_amp * eta
        if self.shape is PerturbationShape.TAIL_SEEDED:
            return np.where(z <= self.b, self.q_amp * eta, 0.0)
        c0 = self.b if self.center is None else self.center
        s = np.clip(np.abs(z - c0) / self.width, 0.0, 1.0)
        return self.q_amp * eta * np.cos(0.5 * np.pi * s) ** 2


# --------------------------------------------------------------------------- #
# Experiments
# --------------------------------------------------------------------------- #


def _pair_run(prob: ComovingProblem, base, pert, T, out_every):
    """March (v, psi) as one stacked state; returns times and both fields."""
    N = prob.history.n_delay
    stacked = np.stack([base + pert, base], axis=1)  # (N+1, 2, n)
    dt = prob.history.dt
    n_steps = _steps(T, dt)
    every = max(1, round(out_every / dt))
    times, vs, ps = [0.0], [stacked[-1, 0].copy()], [stacked[-1, 1].copy()]

    def record(n, u):
        if n % every == 0 or n == n_steps:
            times.append(n * dt)
            vs.append(u[0].copy())
            ps.append(u[1].copy())

    _run(prob, stacked, n_steps, record=record)
    assert N + 1 == stacked.shape[0]
    return np.array(times), np.array(vs), np.array(ps)


@dataclass
class LeadingEdgeReport:
    c: float
    lambda_c: float
    gamma: float
    L_g: float
    times: np.ndarray
    weighted_sup: np.ndarray
    majorant_sup: np.ndarray
    worst_ratio: float
    worst_t: float
    worst_z: float
    rtol: float
    fit: object
    violations: int
    warnings: list = field(default_factory=list)

    @property
    def majorized(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {
            "c": self.c, "lambda_c": self.lambda_c, "gamma": self.gamma, "L_g": self.L_g,
            "worst_ratio": self.worst_ratio, "worst_t": self.worst_t, "worst_z": self.worst_z,
            "violations": self.violations, "majorized": self.majorized,
            "fit_rate": None if self.fit is None else self.fit.rate,
            "fit_power": None if self.fit is None else self.fit.power,
            "warnings": self.warnings,
        }


def experiment_leading_edge(
    prob: ComovingProblem,
    pert: PerturbationSpec,
    T: float,
    lambda_c="lambda1",
    out_every: float = 0.1,
    rtol: float = 1e-3,
) -> LeadingEdgeReport:
    """Weighted difference xi_c|v - psi| against the linear majorant u.

    u solves u_t = u_zz + (2l - c)u_z + (l^2 - cl - 1)u + L_g e^{-l ch} u(t-h, z-ch)
    from xi_c|v0 - psi0| with l = lambda_c, on the same grid and time step.
    """
    bf, c, h, grid = prob.bf, prob.c, prob.h, prob.grid
    L_g = lipschitz_global(bf)
    sd = speed_data(c, L_g, h, lambda_c)
    lam = sd.lambda_c
    z = grid.x
    xi = sd.xi(z)
    base = prob.history.slices
    dv = pert.profile(z, lam)
    coeffs = LinearCoefficients(m=2 * lam - c, p=lam * lam - c * lam - 1.0, q=L_g * math.exp(-lam * c * h),
                                d=-c * h, h=h).require_dissipative(1e-9)
    gamma = gamma_root(coeffs).gamma
    init = HistoryField.constant(grid, h, prob.history.n_delay, xi * dv)
    u = solve_fd(coeffs, grid, init, T, out_every=out_every, weight_rate=lam, midpoint="linear", cfl=1.0,
                 allow_interpolated_shift=prob.allow_interpolated_shift)
    times, vs, ps = _pair_run(prob, base, np.broadcast_to(dv, base.shape), T, out_every)
    if len(times) != len(u.times) or np.max(np.abs(times - u.times)) > 1e-9:
        raise NumericalError("majorant and nonlinear runs are out of step")
    wdiff = xi[None, :] * np.abs(vs - ps)
    # v - psi is only known to a few ulps of psi; below that the difference is noise
    ulp = ULP_SLACK * np.finfo(float).eps * xi[None, :] * np.maximum(np.abs(vs), np.abs(ps))
    allowed = u.slices * (1.0 + rtol) + ulp
    resolved = wdiff > ulp
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(u.slices > 0, wdiff / u.slices, np.where(wdiff > 0, np.inf, 0.0))
    ratio = np.where(resolved, ratio, 0.0)
    bad = wdiff > allowed
    it, iz = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    wsup = np.max(wdiff, axis=1)
    try:
        fit = fit_decay(times, wsup, h, t_min=0.25 * T)
    except ValueError:
        fit = None
    return LeadingEdgeReport(
        c=c, lambda_c=lam, gamma=gamma, L_g=L_g, times=times, weighted_sup=wsup,
        majorant_sup=np.max(u.slices, axis=1), worst_ratio=float(ratio[it, iz]), worst_t=float(times[it]),
        worst_z=float(z[iz]), rtol=rtol, fit=fit, violations=int(np.count_nonzero(bad)), warnings=list(u.warnings),
    )


@dataclass
class GlobalStabilityReport:
    c: float
    gamma0: float
    L_g: float
    L_I: float
    q: float
    C: float
    times: np.ndarray
    D: np.ndarray
    weighted_D: np.ndarray
    envelope: np.ndarray
    violations: list
    fit_rate: float | None
    fit_window: tuple
    range_check: dict

    @property
    def envelope_holds(self) -> bool:
        return not self.violations

    @property
    def rate_ok(self) -> bool:
        if self.gamma0 <= 0:
            return True
        return self.fit_rate is not None and self.fit_rate <= -0.9 * self.gamma0

    def summary(self) -> dict:
        return {
            "c": self.c, "gamma0": self.gamma0, "L_g": self.L_g, "L_I": self.L_I, "q": self.q, "C": self.C,
            "envelope_holds": self.envelope_holds, "n_violations": len(self.violations),
            "first_violations": self.violations[:5], "fit_rate": self.fit_rate, "fit_window": list(self.fit_window),
            "rate_ok": self.rate_ok, "range_check": self.range_check,
        }


def experiment_global_stability(
    prob: ComovingProblem,
    pert: PerturbationSpec,
    T: float,
    lambda_c="peak",
    out_every: float = 0.1,
    rtol: float = 1e-9,
    floor: float = 1e-12,
    fit_floor: float = 1e-10,
    profile: WaveProfile | None = None,
) -> GlobalStabilityReport:
    """D(t) = sup_z |v - psi| against C q e^{-gamma0 t}, C fixed from t = 0.

    ``lambda_c`` defaults to the maximiser of E_c, which gives the largest
    admissible gamma0. The tail rate is fitted on log D over the second half
    of the time D stays above ``fit_floor``; ``floor`` is the absolute slack
    for rounding in the envelope test.
    """
    bf, c, h = prob.bf, prob.c, prob.h
    L_g = lipschitz_global(bf)
    idata = interval_data(bf)
    sd = speed_data(c, L_g, h, lambda_c)
    g0 = gamma0_solve(sd, L_g, idata.L_I)
    z = prob.grid.x
    base = prob.history.slices
    dv = pert.profile(z, sd.lambda_c)
    times, vs, ps = _pair_run(prob, base, np.broadcast_to(dv, base.shape), T, out_every)
    diff = np.abs(vs - ps)
    D = np.max(diff, axis=1)
    wD = np.max(sd.xi(z)[None, :] * diff, axis=1)
    q = pert.q_amp
    C = D[0] / q if q > 0 else 0.0
    env = C * q * np.exp(-g0 * times)
    viol = [{"t": float(t), "D": float(d), "envelope": float(e)} for t, d, e in zip(times, D, env)
            if d > e * (1 + rtol) + floor]
    # fit over the second half of the stretch where D is well above rounding
    resolved = D > fit_floor
    t_end = float(times[resolved][-1]) if resolved.any() else 0.0
    mask = (times >= 0.5 * t_end) & (times <= t_end) & resolved
    fit_rate, window = None, (math.nan, math.nan)
    if mask.sum() >= 10:
        fit_rate = float(np.polyfit(times[mask], np.log(D[mask]), 1)[0])
        window = (float(times[mask][0]), float(times[mask][-1]))
    rc = {}
    if profile is not None:
        rc = range_check(profile, idata.m_K, idata.K)
    return GlobalStabilityReport(c, g0, L_g, idata.L_I, q, C, times, D, wD, env, viol, fit_rate, window, rc)


def tail_rate(z, u, k: float) -> float:
    """Exponential rate of the leading edge of a datum (inf if it has none)."""
    m = (u > 1e-12 * k) & (u < 1e-3 * k) & (z < 0)
    if m.sum() < 5:
        return math.inf
    return float(np.polyfit(z[m], np.log(u[m]), 1)[0])


def weighted_gap_share(z, d1, d2, lam: float, frac: float = 0.25) -> float:
    """Share of int_{z<=0} e^{-lam z}|d1 - d2| coming from the leftmost ``frac`` of the grid.

    Integrable weighted differences put almost nothing there; a difference
    that only decays like the weight spreads evenly over the tail.
    """
    left = z <= 0
    wd = np.exp(-lam * z[left]) * np.abs(d1[left] - d2[left])
    total = float(np.sum(wd))
    if total == 0.0:
        return 0.0
    n_far = max(1, int(frac * len(z)))
    return float(np.sum(wd[:n_far]) / total)


def glued_ramp_datum(k: float, rate: float, z_a: float = -10.0, z_b: float = 3.0):
    """Piecewise-linear step with the exponential leading edge of ``logistic_datum``.

    Equal to the logistic left of z_a, linear from there up to kappa at z_b.
    """
    base = logistic_datum(k, rate)
    ya = float(base(z_a))

    def f(z):
        z = np.asarray(z, dtype=float)
        ramp = ya + (k - ya) * np.clip((z - z_a) / (z_b - z_a), 0.0, 1.0)
        return np.where(z <= z_a, base(z), ramp)

    return f


@dataclass
class UniquenessReport:
    distance: float
    profiles: tuple
    tail_rates: tuple
    gap_share: float
    hypothesis_ok: bool
    conclusive: bool
    relaxed_distance: float

    @property
    def passed(self) -> bool:
        return self.conclusive and self.distance < 1e-5

    def summary(self) -> dict:
        return {
            "distance": self.distance, "relaxed_distance": self.relaxed_distance, "tail_rates": list(self.tail_rates),
            "gap_share": self.gap_share, "hypothesis_ok": self.hypothesis_ok, "conclusive": self.conclusive,
            "passed": self.passed,
        }


def experiment_uniqueness(bf: BirthFunction, c: float, h: float, data, grid: GridSpec | None = None,
                          share_tol: float = 1e-3, **kw) -> UniquenessReport:
    """Relax two data to profiles and compare them after anchoring.

    The pair passes the hypothesis gate when e^{-lambda_1 z} times the
    difference of the data is integrable on the leading edge, judged by
    :func:`weighted_gap_share`; pairs failing it may select different
    profiles and are only reported.
    """
    g0 = float(bf.dg(0.0))
    sd = speed_data(c, g0, h)
    k = kappa(bf)
    if grid is None:
        grid = comoving_grid(c, h, *default_window(sd.lambda1, kw.pop("z_max", 60.0)), kw.pop("dx0", DEFAULT_DX))
    profs = [compute_profile(bf, c, h, grid, datum=d, **kw) for d in data]
    z = grid.x
    u1, u2 = (np.asarray(d(z), dtype=float) for d in data)
    rates = (tail_rate(z, u1, k), tail_rate(z, u2, k))
    share = weighted_gap_share(z, u1, u2, sd.lambda1)
    p1, p2 = profs
    dist = float(np.max(np.abs(anchored(z, p1.psi, 0.5 * k) - anchored(z, p2.psi, 0.5 * k))))
    rdist = float(np.max(np.abs(anchored(z, p1.relaxed, 0.5 * k) - anchored(z, p2.relaxed, 0.5 * k))))
    return UniquenessReport(dist, (p1, p2), rates, share, share <= share_tol, p1.converged and p2.converged, rdist)


@dataclass
class ComparisonReport:
    max_violation: float
    worst_t: float
    worst_z: float
    tol: float
    v1_max: float
    v2_max: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def summary(self) -> dict:
        return dict(self.__dict__, passed=self.passed)


def check_comparison(g1: BirthFunction, g2: BirthFunction, c: float, h: float, grid: GridSpec,
                     data1, data2, T: float, tol: float = 1e-9, n_delay: int | None = None,
                     check_order: bool = True) -> ComparisonReport:
    """Run both nonlinearities from ordered histories and track max(v1 - v2).

    data1/data2 are (N+1, n) windows with data1 <= data2.
    """
    data1 = np.asarray(data1, dtype=float)
    data2 = np.asarray(data2, dtype=float)
    if data1.shape != data2.shape or (n_delay is not None and data1.shape[0] != n_delay + 1):
        raise ConfigError(f"history windows have shapes {data1.shape} and {data2.shape}")
    if check_order:
        if np.any(data1 > data2):
            raise ConfigError("comparison data are not ordered")
        u = np.linspace(0.0, max(np.max(data2), 1e-12) * 2.0, 2001)
        if np.any(g1.g(u) > g2.g(u) + 1e-14):
            raise ConfigError("need g1 <= g2 on the sampled range")
        # the order argument needs one of them nondecreasing where the data live
        u = u[u <= np.max(data2)]
        if not any(np.all(np.diff(g.g(u)) >= -1e-14) for g in (g1, g2)):
            raise ConfigError("need g1 or g2 nondecreasing on [0, max data2]")
    h1 = HistoryField(grid, h, data1)
    p1 = ComovingProblem(g1, c, h, grid, h1, guard_max=1e6)
    ComovingProblem(g2, c, h, grid, HistoryField(grid, h, data2), guard_max=1e6)  # validates the second window
    dt = h1.dt
    n_steps = _steps(T, dt)
    op = p1.operator()
    shift = p1.shift()
    stacked = np.stack([data1, data2], axis=1)
    best = [float(np.max(data1 - data2)), 0.0, float(grid.x[0])]
    tops = [float(np.max(data1)), float(np.max(data2))]

    def forcing(vd):
        s = shift(vd)
        return np.stack([g1.g(s[0]), g2.g(s[1])])

    def record(n, u):
        d = u[0] - u[1]
        i = int(np.argmax(d))
        if d[i] > best[0]:
            best[:] = [float(d[i]), n * dt, float(grid.x[i])]
        tops[0] = max(tops[0], float(np.max(u[0])))
        tops[1] = max(tops[1], float(np.max(u[1])))

    march(stacked, n_steps, dt, op, forcing, record=record, midpoint="linear")
    return ComparisonReport(max(best[0], 0.0), best[1], best[2], tol, tops[0], tops[1])
