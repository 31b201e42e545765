"""Real roots of the scalar delay characteristic equations.

Everything here reduces to the monotone equation

    f(lam) = lam - a - b * exp(-h * lam) = 0,    b >= 0, h > 0,

which has exactly one real root because f' = 1 + b h exp(-h lam) > 0, and to
the concave speed function

    E_c(lam) = -lam**2 + c*lam + 1 - L*exp(-lam*c*h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleError, InvalidInputError, NoRealRootError

_EXP_MAX = 700.0
DOUBLE_ROOT_GAP = 1e-6


def _exp(x: float) -> float:
    if x > _EXP_MAX:
        return math.inf
    return math.exp(x)


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v!r}")


# --------------------------------------------------------------------------- #
# The scalar equation  lam = a + b exp(-h lam)
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ScalarCharProblem:
    a: float
    b: float
    h: float

    def __post_init__(self):
        _check_finite(a=self.a, b=self.b, h=self.h)
        if self.b < 0:
            raise InvalidInputError(f"b must be >= 0, got {self.b}")
        if self.h <= 0:
            raise InvalidInputError(f"h must be > 0, got {self.h}")


def char_residual(lam: float, a: float, b: float, h: float) -> float:
    """f(lam) = lam - a - b e^{-h lam}; -inf when the exponential overflows."""
    if b == 0.0:
        return lam - a
    e = _exp(-h * lam)
    if math.isinf(e):
        return -math.inf
    return lam - a - b * e


def solve_scalar_char(a, b=None, h=None) -> float:
    """Unique real root of ``lam = a + b exp(-h lam)``.

    Accepts either a :class:`ScalarCharProblem` or the three numbers.

    Bracket: f(a) = -b e^{-ha} <= 0 and f(max(0, a+b)) >= 0. Bisection shrinks
    it to a relative width of 1e-13, then at most five Newton steps polish the
    root, each kept inside the bracket. The sign of f(0) fixes the bracket at
    zero whenever possible, so the sign laws ``lam <= 0 iff -a >= b`` and
    ``lam == 0 iff -a == b`` hold exactly in floating point.
    """
    if isinstance(a, ScalarCharProblem):
        prob = a
    else:
        prob = ScalarCharProblem(float(a), float(b), float(h))
    a, b, h = prob.a, prob.b, prob.h

    if b == 0.0:
        return a
    if a + b == 0.0:
        return 0.0

    lo, hi = a, max(0.0, a + b)
    f0 = -a - b
    if f0 > 0:
        hi = min(hi, 0.0)
    elif f0 < 0:
        lo = max(lo, 0.0)

    for _ in range(400):
        if hi - lo <= 1e-13 * (1.0 + abs(lo) + abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if char_residual(mid, a, b, h) < 0:
            lo = mid
        else:
            hi = mid

    lam = 0.5 * (lo + hi)
    for _ in range(5):
        e = _exp(-h * lam)
        fval = lam - a - b * e
        if fval == 0.0:
            break
        step = fval / (1.0 + b * h * e)
        new = lam - step
        if not (lo <= new <= hi):
            break
        if new == lam:
            break
        lam = new

    # root strictly positive when f(0) < 0, strictly negative when f(0) > 0
    if f0 < 0 and lam <= 0.0:
        lam = math.ulp(0.0)
    elif f0 > 0 and lam >= 0.0:
        lam = -math.ulp(0.0)
    return lam


# --------------------------------------------------------------------------- #
# Linear delayed PDE coefficients and the decay exponent
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class LinearCoefficients:
    """Coefficients of u_t = u_xx + m u_x + p u + q u(t-h, x+d)."""

    m: float = 0.0
    p: float = 0.0
    q: float = 0.0
    d: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        _check_finite(m=self.m, p=self.p, q=self.q, d=self.d, h=self.h)
        if self.h <= 0:
            raise InvalidInputError(f"h must be > 0, got {self.h}")

    def require_dissipative(self, slack: float = 1e-12) -> "LinearCoefficients":
        """Check -p >= q >= 0.

        A violation of size below ``slack`` (relative) is rounding noise from
        an upstream root and is snapped onto the boundary -p == q.
        """
        if self.q < 0:
            raise DomainError(f"need q >= 0, got q={self.q}")
        gap = -self.p - self.q
        if gap < 0:
            if gap >= -slack * (1.0 + abs(self.p)):
                return LinearCoefficients(self.m, -self.q, self.q, self.d, self.h)
            raise DomainError(f"need -p >= q, got -p={-self.p} < q={self.q}")
        return self


@dataclass(frozen=True)
class SpectralEnvelope:
    gamma: float
    eps_h: float
    h: float

    def alpha_h(self, zeta):
        """-(1/h) log(1 + h eps_h zeta^2); vectorised, alpha_h(0) == 0."""
        z = np.asarray(zeta, dtype=float)
        out = -np.log1p(self.h * self.eps_h * z * z) / self.h
        return float(out) if out.ndim == 0 else out

    def lower(self, zeta):
        z = np.asarray(zeta, dtype=float)
        out = -self.eps_h * z * z + self.gamma
        return float(out) if out.ndim == 0 else out

    def upper(self, zeta):
        return self.alpha_h(zeta) + self.gamma


def gamma_root(coeffs: LinearCoefficients) -> SpectralEnvelope:
    """Non-positive root of gamma - p = q exp(-h gamma), with eps_h."""
    coeffs = coeffs.require_dissipative()
    gamma = solve_scalar_char(coeffs.p, coeffs.q, coeffs.h)
    eps_h = 1.0 / (1.0 + coeffs.h * (gamma - coeffs.p))
    return SpectralEnvelope(gamma=gamma, eps_h=eps_h, h=coeffs.h)


def lambda_of_zeta(zeta: float, coeffs: LinearCoefficients) -> float:
    """Real root of lam = -zeta^2 + p + q exp(-h lam)."""
    if coeffs.q < 0:
        raise DomainError(f"need q >= 0, got q={coeffs.q}")
    _check_finite(zeta=zeta)
    return solve_scalar_char(-zeta * zeta + coeffs.p, coeffs.q, coeffs.h)


@dataclass
class GaussBoundsReport:
    envelope: SpectralEnvelope
    zetas: np.ndarray
    lam: np.ndarray
    lower_margin: np.ndarray  # lam - lower bound
    upper_margin: np.ndarray  # upper bound - lam
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_gauss_bounds(coeffs: LinearCoefficients, zetas, tol: float = 1e-12) -> GaussBoundsReport:
    """Check -eps_h z^2 + gamma <= lam(z) <= alpha_h(z) + gamma for each z."""
    env = gamma_root(coeffs)
    zs = np.asarray(zetas, dtype=float).ravel()
    lam = np.array([lambda_of_zeta(z, coeffs) for z in zs])
    lo_margin = lam - env.lower(zs)
    up_margin = env.upper(zs) - lam
    scale = tol * (1.0 + np.abs(lam))
    violations = []
    for z, l, lm, um, s in zip(zs, lam, lo_margin, up_margin, scale):
        if lm < -s:
            violations.append({"zeta": float(z), "lam": float(l), "bound": "lower", "margin": float(lm)})
        if um < -s:
            violations.append({"zeta": float(z), "lam": float(l), "bound": "upper", "margin": float(um)})
    return GaussBoundsReport(env, zs, lam, lo_margin, up_margin, violations)


def log_asymptotics_ratio(coeffs: LinearCoefficients, zeta: float) -> float:
    """lam(zeta) / log(zeta); tends to -2/h as zeta grows."""
    if coeffs.q <= 0:
        raise DomainError("the logarithmic limit needs q > 0")
    if zeta <= 1:
        raise DomainError(f"need zeta > 1, got {zeta}")
    return lambda_of_zeta(zeta, coeffs) / math.log(zeta)


def sigma_root(coeffs: LinearCoefficients) -> float:
    """Real root of q exp(-sigma h) = sigma + m^2/4 - p."""
    if coeffs.q < 0:
        raise DomainError(f"need q >= 0, got q={coeffs.q}")
    return solve_scalar_char(coeffs.p - 0.25 * coeffs.m ** 2, coeffs.q, coeffs.h)


@dataclass(frozen=True)
class DecayAmplitude:
    proof: float
    stated: float


def decay_amplitude(coeffs: LinearCoefficients, C_u0: float) -> DecayAmplitude:
    """Prefactor of the sup-norm decay law, in both readings.

    ``stated``: C/2 * sqrt(1 + h (gamma - p)); ``proof``: the same with an
    extra sqrt(h) under the root. They coincide for h == 1.
    """
    if C_u0 < 0:
        raise DomainError("C_u0 must be >= 0")
    env = gamma_root(coeffs)
    s = 1.0 + coeffs.h * (env.gamma - coeffs.p)
    return DecayAmplitude(
        proof=0.5 * C_u0 * math.sqrt(coeffs.h * s),
        stated=0.5 * C_u0 * math.sqrt(s),
    )


# --------------------------------------------------------------------------- #
# Speeds: E_c, c(L), lambda_1 <= lambda_2, gamma_0
# --------------------------------------------------------------------------- #


def speed_function(lam, c: float, L: float, h: float):
    lam = np.asarray(lam, dtype=float)
    out = -lam * lam + c * lam + 1.0 - L * np.exp(-lam * c * h)
    return float(out) if out.ndim == 0 else out


def _speed_peak(c: float, L: float, h: float) -> float:
    """Maximiser of the concave E_c, by bisection on E_c' (decreasing)."""
    if c * h == 0.0:
        return 0.5 * c

    def dE(lam):
        return -2.0 * lam + c + L * c * h * _exp(-lam * c * h)

    lo = 0.5 * c  # dE >= 0 here
    hi = 0.5 * (c + L * c * h)  # dE <= 0 here for lam >= 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * (1.0 + hi) or mid in (lo, hi):
            break
        if dE(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def speed_peak_value(c: float, L: float, h: float) -> tuple[float, float]:
    lam = _speed_peak(c, L, h)
    return lam, speed_function(lam, c, L, h)


def speed_threshold(L: float, h: float) -> float:
    """c(L): the speed at which max_lam E_c(lam) == 0."""
    _check_finite(L=L, h=h)
    if L <= 1:
        raise DomainError(f"c(L) needs L > 1, got L={L}")
    if h < 0:
        raise DomainError(f"need h >= 0, got {h}")
    c_free = 2.0 * math.sqrt(L - 1.0)
    if h == 0.0:
        return c_free
    lo, hi = 0.0, c_free + L
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi or mid in (lo, hi):
            break
        if speed_peak_value(mid, L, h)[1] < 0:
            lo = mid
        else:
            hi = mid
    return hi


def _bisect_speed_root(c, L, h, lo, hi, rising: bool) -> float:
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * (1.0 + hi) or mid in (lo, hi):
            break
        neg = speed_function(mid, c, L, h) < 0
        if neg == rising:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    for _ in range(5):
        e = _exp(-lam * c * h)
        val = -lam * lam + c * lam + 1.0 - L * e
        der = -2.0 * lam + c + L * c * h * e
        if der == 0.0 or val == 0.0:
            break
        new = lam - val / der
        if not (lo <= new <= hi):
            break
        lam = new
    return lam


def lambda_interval(c: float, L: float, h: float) -> tuple[float, float]:
    """The two roots lam1 <= lam2 of E_c; a double root near c = c(L)."""
    _check_finite(c=c, L=L, h=h)
    if L <= 1:
        raise DomainError(f"need L > 1, got L={L}")
    peak, top = speed_peak_value(c, L, h)
    if top < 0:
        if top > -1e-12:
            return peak, peak
        raise NoRealRootError(f"E_c has no real root for c={c} (max E_c = {top:.3e} < 0)")
    lam1 = _bisect_speed_root(c, L, h, 0.0, peak, rising=True)
    hi = max(0.5 * (c + math.sqrt(c * c + 4.0)) + 1.0, peak + 1.0)
    lam2 = _bisect_speed_root(c, L, h, peak, hi, rising=False)
    if lam2 - lam1 < DOUBLE_ROOT_GAP:
        mid = 0.5 * (lam1 + lam2)
        return mid, mid
    return lam1, lam2


@dataclass(frozen=True)
class SpeedData:
    """Speed c with its admissible weight exponents for Lipschitz bound L."""

    L: float
    h: float
    c: float
    lambda1: float
    lambda2: float
    lambda_c: float

    @property
    def double_root(self) -> bool:
        return self.lambda2 - self.lambda1 < DOUBLE_ROOT_GAP

    def E(self, lam):
        return speed_function(lam, self.c, self.L, self.h)

    def xi(self, z):
        """Leading-edge weight e^{-lambda_c z}."""
        return np.exp(-self.lambda_c * np.asarray(z, dtype=float))

    def eta(self, z, b: float):
        """min(1, e^{lambda_c (z - b)})."""
        return np.minimum(1.0, np.exp(self.lambda_c * (np.asarray(z, dtype=float) - b)))


def speed_data(c: float, L: float, h: float, lambda_c="lambda1") -> SpeedData:
    """Bundle c with lambda1, lambda2 and a chosen lambda_c.

    ``lambda_c`` is "lambda1", "lambda2", "peak" (the maximiser of E_c, which
    gives the largest stability rate) or an explicit number in [lam1, lam2].
    """
    lam1, lam2 = lambda_interval(c, L, h)
    if lam2 - lam1 < DOUBLE_ROOT_GAP:
        lc = 0.5 * (lam1 + lam2)
    elif lambda_c == "lambda1":
        lc = lam1
    elif lambda_c == "lambda2":
        lc = lam2
    elif lambda_c == "peak":
        lc = _speed_peak(c, L, h)
    else:
        lc = float(lambda_c)
        if not (lam1 - 1e-12 <= lc <= lam2 + 1e-12):
            raise DomainError(f"lambda_c={lc} outside [{lam1}, {lam2}]")
    return SpeedData(L=L, h=h, c=c, lambda1=lam1, lambda2=lam2, lambda_c=lc)


def gamma0_slacks(g0: float, sd: SpeedData, L_g: float, L_I: float) -> tuple[float, float]:
    lc, c, h = sd.lambda_c, sd.c, sd.h
    s1 = -lc * lc + c * lc + 1.0 - g0 - L_g * _exp(g0 * h) * _exp(-lc * c * h)
    s2 = _exp(-g0 * h) * (1.0 - g0) - L_I
    return s1, s2


def gamma0_solve(sd: SpeedData, L_g: float, L_I: float, tol: float = 1e-12) -> float:
    """Largest gamma0 in [0, 1] meeting both rate inequalities.

    Both slacks decrease strictly in gamma0, so the feasible set is an
    interval [0, gamma0*] found by bisection. Slacks above -tol at zero count
    as feasible (lambda_c on a root of E_c makes the first slack exactly 0).
    """
    s1, s2 = gamma0_slacks(0.0, sd, L_g, L_I)
    if s1 < -tol or s2 < -tol:
        raise InfeasibleError(
            f"gamma0 = 0 is infeasible: slacks ({s1:.3e}, {s2:.3e}); "
            "need E_c(lambda_c) >= 0 and L(I) <= 1"
        )
    if min(s1, s2) <= 0:
        return 0.0
    if min(gamma0_slacks(1.0, sd, L_g, L_I)) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-15 or mid in (lo, hi):
            break
        if min(gamma0_slacks(mid, sd, L_g, L_I)) >= 0:
            lo = mid
        else:
            hi = mid
    return lo
