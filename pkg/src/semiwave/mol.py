"""Method-of-lines pieces shared by the linear and nonlinear solvers.

The spatial operator is a three-point stencil for

    u_xx + m u_x + p u

written as the conjugate  e^{-lam x} A e^{lam x}  of the central-difference
operator A = D2 - c D1 + r with c = 2 lam - m and r = lam^2 - m lam + p.
lam = 0 is the plain central scheme. Running the linear majorant with
lam = lambda_c makes it the exact discrete image of the co-moving nonlinear
scheme under the weight e^{-lambda_c z}, so comparison arguments carry over
to the discrete level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .delayline import DelayLine
from .errors import ConfigError

BOUNDARIES = ("periodic", "dirichlet", "neumann")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid x_i = x_min + i dx, i = 0..n-1, dx = (x_max - x_min)/n.

    ``left``/``right`` pick the boundary rule when not periodic.
    """

    x_min: float
    x_max: float
    n: int
    periodic: bool = True
    left: str = "dirichlet"
    right: str = "dirichlet"

    def __post_init__(self):
        if self.n < 4 or self.x_max <= self.x_min:
            raise ConfigError(f"bad grid [{self.x_min}, {self.x_max}] with n={self.n}")
        if self.left not in BOUNDARIES[1:] or self.right not in BOUNDARIES[1:]:
            raise ConfigError(f"unknown boundary rule {self.left!r}/{self.right!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def is_pow2(self) -> bool:
        return self.n & (self.n - 1) == 0

    @classmethod
    def centered(cls, width: float, n: int, periodic: bool = True, **kw) -> "GridSpec":
        return cls(-0.5 * width, 0.5 * width, n, periodic, **kw)


def choose_n_delay(h: float, dx: float, cfl: float = 0.4) -> int:
    """Smallest N with h/N <= cfl * dx^2."""
    return max(1, math.ceil(h / (cfl * dx * dx) - 1e-12))


class StencilOperator:
    """Three-point operator u -> a_m u_{i-1} + a_0 u_i + a_p u_{i+1}.

    Ghost values: zero for Dirichlet; for Neumann the mirrored interior value
    of the unweighted field, i.e. u_ghost = e^{-2 lam dx} u_{n-2} on the right.
    """

    def __init__(self, grid: GridSpec, m: float, p: float, weight_rate: float = 0.0):
        dx = grid.dx
        lam = weight_rate
        c = 2.0 * lam - m
        r = lam * lam - m * lam + p
        self.grid = grid
        self.a_m = math.exp(-lam * dx) * (1.0 / dx**2 + 0.5 * c / dx)
        self.a_p = math.exp(lam * dx) * (1.0 / dx**2 - 0.5 * c / dx)
        self.a_0 = -2.0 / dx**2 + r
        self.lam = lam
        if self.a_m < 0 or self.a_p < 0:
            raise ConfigError(
                f"cell Peclet number too large: |drift| dx = {abs(c) * dx:.3g} must be <= 2 for a monotone stencil"
            )

    @property
    def diag_magnitude(self) -> float:
        return abs(self.a_0)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        out = self.a_0 * u
        if g.periodic:
            out += self.a_m * np.roll(u, 1, axis=-1) + self.a_p * np.roll(u, -1, axis=-1)
            return out
        out[..., 1:] += self.a_m * u[..., :-1]
        out[..., :-1] += self.a_p * u[..., 1:]
        dx = g.dx
        if g.left == "neumann":
            out[..., 0] += self.a_m * math.exp(2.0 * self.lam * dx) * u[..., 1]
        if g.right == "neumann":
            out[..., -1] += self.a_p * math.exp(-2.0 * self.lam * dx) * u[..., -2]
        return out


class Shift:
    """u(x) -> u(x + d) on the grid, exact for d/dx integer, else linear."""

    def __init__(self, grid: GridSpec, d: float, allow_interpolation: bool = True, fill_right: str | None = None):
        s = d / grid.dx
        k = round(s)
        self.grid = grid
        self.aligned = abs(s - k) <= 1e-9 * max(1.0, abs(s))
        if not self.aligned and not allow_interpolation:
            raise ConfigError(f"shift d={d} is not a multiple of dx={grid.dx}")
        self.k0 = k if self.aligned else math.floor(s)
        self.frac = 0.0 if self.aligned else s - self.k0
        # beyond a Neumann right edge the field is continued by its last value
        self.fill_right = fill_right if fill_right is not None else (grid.right if not grid.periodic else "periodic")

    def _int_shift(self, u, k):
        if k == 0:
            return u
        if self.grid.periodic:
            return np.roll(u, -k, axis=-1)
        out = np.empty_like(u)
        n = u.shape[-1]
        if abs(k) >= n:
            out[...] = 0.0 if (k < 0 or self.fill_right != "neumann") else u[..., -1:]
            return out
        if k > 0:
            out[..., : n - k] = u[..., k:]
            out[..., n - k :] = u[..., -1:] if self.fill_right == "neumann" else 0.0
        else:
            out[..., -k:] = u[..., : n + k]
            out[..., :-k] = 0.0
        return out

    def __call__(self, u):
        a = self._int_shift(u, self.k0)
        if self.aligned:
            return a
        b = self._int_shift(u, self.k0 + 1)
        return (1.0 - self.frac) * a + self.frac * b


def monotone_dt_limit(op: StencilOperator) -> float:
    """dt below which an RK4 step with delayed forcing keeps order.

    The step is polynomial in dt*A; with A = -delta I + N, N >= 0, all its
    Taylor coefficients at -delta stay nonnegative for delta <= 2/3.
    """
    return (2.0 / 3.0) / op.diag_magnitude


def rk4_forced_step(u, op, dt, F0, Fh, F1):
    k1 = op(u) + F0
    k2 = op(u + 0.5 * dt * k1) + Fh
    k3 = op(u + 0.5 * dt * k2) + Fh
    k4 = op(u + dt * k3) + F1
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def march(history, n_steps, dt, op, forcing, record=None, midpoint="cubic", guard=None):
    """Integrate u' = op(u) + forcing(u(t - h)) for n_steps from the history window.

    ``forcing`` maps a delayed slice to the source term (shift, coefficient,
    nonlinearity). ``record(n, u)`` sees the state after step n. ``guard(n, u)``
    may raise to stop. Returns the final DelayLine.
    """
    history = np.asarray(history, dtype=float)
    N = history.shape[0] - 1
    line = DelayLine(N, history, interpolation=midpoint)
    F_next = forcing(line[-N])
    for n in range(n_steps):
        F0 = F_next
        Fh = forcing(line.midpoint(n - N))
        F_next = forcing(line[n - N + 1])
        u = rk4_forced_step(line[n], op, dt, F0, Fh, F_next)
        line.push(u)
        if guard is not None:
            guard(n + 1, u)
        if record is not None:
            record(n + 1, u)
    return line
