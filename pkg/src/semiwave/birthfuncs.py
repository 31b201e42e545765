"""Birth functions g and the scalar constants the stability results consume.

All families are in the rescaled form of u_t = u_xx - u + g(u(t-h, x)):

    Nicholson      g(u) = p u e^{-u}                 (raw: p/delta, h*delta)
    Mackey-Glass   g(u) = a b^n u / (b^n + u^n)      (raw: a/d,     h*d)
    custom         any user-supplied g, g' on R_+

Closed forms are used where they exist (kappa, L_g, g'(kappa), the peak of
a unimodal g); everything else is found on a dense scan of [0, 10 kappa]
refined by a bounded 1-d optimiser.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .charspec import speed_threshold
from .errors import DomainError, ModelError

SCAN_POINTS = 100_000


class Family(str, enum.Enum):
    NICHOLSON = "nicholson"
    MACKEY_GLASS = "mackey_glass"
    CUSTOM_MONOTONE = "custom"


@dataclass
class BirthFunction:
    family: Family
    params: dict
    g: Callable
    dg: Callable
    name: str = ""
    kappa_exact: float | None = None
    lipschitz_exact: float | None = None
    peak: float | None = None  # argmax of a unimodal g, inf if nondecreasing
    scale: dict = field(default_factory=dict)  # raw -> rescaled factors

    def __call__(self, u):
        return self.g(u)

    def __repr__(self):
        return f"BirthFunction({self.name or self.family.value}, {self.params})"


def nicholson(p: float, delta: float = 1.0) -> BirthFunction:
    """p u e^{-u} after rescaling time by delta (so the decay rate is 1)."""
    if p <= 0 or delta <= 0:
        raise DomainError("Nicholson needs p > 0 and delta > 0")
    P = p / delta

    def g(u):
        u = np.asarray(u, dtype=float)
        return P * u * np.exp(-u)

    def dg(u):
        u = np.asarray(u, dtype=float)
        return P * (1.0 - u) * np.exp(-u)

    return BirthFunction(
        Family.NICHOLSON,
        {"p": P},
        g,
        dg,
        name=f"nicholson(p={P:.6g})",
        kappa_exact=math.log(P) if P > 1 else None,
        lipschitz_exact=P,  # |g'| peaks at u = 0; the interior extremum is P e^{-2}
        peak=1.0,
        scale={"time": delta, "space": math.sqrt(delta), "g": 1.0 / delta},
    )


def mackey_glass(a: float, b: float, n: float, d: float = 1.0) -> BirthFunction:
    """a b^n u / (b^n + u^n) with the linear decay rescaled to 1."""
    if a <= 0 or b <= 0 or n <= 0 or d <= 0:
        raise DomainError("Mackey-Glass needs a, b, n, d > 0")
    A = a / d
    bn = b**n

    def g(u):
        u = np.asarray(u, dtype=float)
        return A * bn * u / (bn + u**n)

    def dg(u):
        u = np.asarray(u, dtype=float)
        un = u**n
        return A * bn * (bn + (1.0 - n) * un) / (bn + un) ** 2

    peak = math.inf if n <= 1 else b / (n - 1.0) ** (1.0 / n)
    return BirthFunction(
        Family.MACKEY_GLASS,
        {"a": A, "b": b, "n": n},
        g,
        dg,
        name=f"mackey_glass(a={A:.6g}, b={b:.6g}, n={n:.6g})",
        kappa_exact=b * (A - 1.0) ** (1.0 / n) if A > 1 else None,
        lipschitz_exact=A if n <= 1 else None,
        peak=peak,
        scale={"time": d, "space": math.sqrt(d), "g": 1.0 / d},
    )


def custom(g, dg, name: str = "custom", u_max: float = 100.0, peak: float | None = None) -> BirthFunction:
    """Wrap user callables; ``u_max`` bounds the search for the positive fixed point."""

    def gv(u):
        return np.asarray(g(np.asarray(u, dtype=float)), dtype=float)

    def dgv(u):
        return np.asarray(dg(np.asarray(u, dtype=float)), dtype=float)

    return BirthFunction(Family.CUSTOM_MONOTONE, {"u_max": u_max}, gv, dgv, name=name, peak=peak)


# --------------------------------------------------------------------------- #
# Fixed point and Lipschitz constants
# --------------------------------------------------------------------------- #


def kappa(bf: BirthFunction) -> float:
    """The positive fixed point."""
    if bf.family is not Family.CUSTOM_MONOTONE:
        if bf.kappa_exact is None:
            raise ModelError(f"{bf.name}: no positive fixed point (g(u) < u for u > 0)")
        return bf.kappa_exact
    u_max = bf.params.get("u_max", 100.0)
    u = np.linspace(0.0, u_max, SCAN_POINTS + 1)[1:]
    f = bf.g(u) - u
    sign = np.sign(f)
    idx = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
    if idx.size == 0:
        raise ModelError(f"{bf.name}: no sign change of g(u) - u on (0, {u_max}]")
    i = idx[0]
    if f[i] == 0:
        return float(u[i])
    return brentq(lambda s: float(bf.g(s)) - s, u[i], u[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _refine_max(fun, u, vals, lo, hi):
    """Dense-scan argmax of ``vals`` refined by a bounded optimiser."""
    i = int(np.argmax(vals))
    a = u[max(i - 1, 0)]
    b = u[min(i + 1, len(u) - 1)]
    best_u, best = float(u[i]), float(vals[i])
    if b > a:
        res = minimize_scalar(lambda s: -float(fun(s)), bounds=(max(a, lo), min(b, hi)), method="bounded",
                              options={"xatol": 1e-13})
        if -res.fun > best:
            best_u, best = float(res.x), float(-res.fun)
    return best_u, best


def max_on(fun, lo: float, hi: float, n: int = SCAN_POINTS) -> tuple[float, float]:
    """(argmax, max) of fun on [lo, hi]."""
    if hi <= lo:
        return lo, float(fun(lo))
    u = np.linspace(lo, hi, n + 1)
    return _refine_max(fun, u, fun(u), lo, hi)


def min_on(fun, lo: float, hi: float, n: int = SCAN_POINTS) -> tuple[float, float]:
    arg, val = max_on(lambda s: -np.asarray(fun(s)), lo, hi, n)
    return arg, -val


def lipschitz_on(bf: BirthFunction, lo: float, hi: float) -> float:
    """sup |g'| on [lo, hi] (the Lipschitz constant of a C^1 g there)."""
    if hi <= lo:
        return float(abs(bf.dg(lo)))
    return max_on(lambda s: np.abs(bf.dg(s)), lo, hi)[1]


def lipschitz_global(bf: BirthFunction) -> float:
    """L_g = sup_{u >= 0} |g'(u)|, closed form when known, else on [0, 10 kappa]."""
    if bf.lipschitz_exact is not None:
        return bf.lipschitz_exact
    try:
        hi = 10.0 * kappa(bf)
    except ModelError:
        hi = bf.params.get("u_max", 100.0)
    return lipschitz_on(bf, 0.0, hi)


def g_star_plus(bf: BirthFunction) -> float:
    """sup_{s > 0} g(s)/s, with the s -> 0 limit g'(0) included."""
    k = kappa(bf)
    g0 = float(bf.dg(0.0))
    _, best = max_on(lambda s: np.asarray(bf.g(s)) / np.maximum(s, 1e-300), 1e-9 * k, 10.0 * k)
    return max(g0, best)


def g_prime_kappa(bf: BirthFunction) -> float:
    k = kappa(bf)
    if bf.family is Family.NICHOLSON:
        return 1.0 - k  # p (1 - ln p) e^{-ln p}
    if bf.family is Family.MACKEY_GLASS:
        a, n = bf.params["a"], bf.params["n"]
        return 1.0 - n * (a - 1.0) / a
    return float(bf.dg(k))


# --------------------------------------------------------------------------- #
# Condition (M)
# --------------------------------------------------------------------------- #


@dataclass
class MonostabilityReport:
    kappa: float
    g_prime_0: float
    g_prime_kappa: float
    holder_C: float
    holder_theta: float
    delta0: float
    passes_M: bool
    fixed_points: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    reasons: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def positive_fixed_points(bf: BirthFunction, hi: float, step: float) -> list[float]:
    """Crossings of g(u) = u in (0, hi], located to machine precision."""
    n = max(2, int(round(hi / step)))
    u = np.linspace(0.0, hi, n + 1)[1:]
    f = bf.g(u) - u
    out = []
    for i in np.nonzero(f == 0)[0]:
        out.append(float(u[i]))
    s = np.sign(f)
    for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        out.append(brentq(lambda x: float(bf.g(x)) - x, u[i], u[i + 1], xtol=1e-15))
    return sorted(out)


def holder_estimate(bf: BirthFunction, k: float, delta0: float) -> tuple[float, float]:
    """(C, theta) with |g'(u)-g'(0)| + |g'(k)-g'(k-u)| <= C u^theta on (0, delta0]."""
    # low decades only, so the O(u^2) part of a smooth g does not bias theta
    u = np.geomspace(delta0 * 1e-6, delta0 * 1e-2, 200)
    Q = np.abs(bf.dg(u) - bf.dg(0.0)) + np.abs(bf.dg(k) - bf.dg(k - u))
    pos = Q > 0
    if pos.sum() < 2:
        return 0.0, 1.0
    slope = np.polyfit(np.log(u[pos]), np.log(Q[pos]), 1)[0]
    theta = float(min(1.0, max(slope, 1e-3)))
    C = float(np.max(Q[pos] / u[pos] ** theta))
    return C, theta


def check_M(bf: BirthFunction) -> MonostabilityReport:
    """Fixed-point count, g'(0) > 1 > g'(kappa), and a Hölder estimate."""
    g0 = float(bf.dg(0.0))
    try:
        k = kappa(bf)
    except ModelError as exc:
        return MonostabilityReport(math.nan, g0, math.nan, math.nan, math.nan, math.nan, False,
                                   reasons=[str(exc)])
    fps = positive_fixed_points(bf, 10.0 * k, k / 1e4)
    gk = g_prime_kappa(bf)
    reasons, flags = [], []
    if len(fps) != 1:
        reasons.append(f"g(u) = u has {len(fps) + 1} solutions on [0, 10 kappa]: 0 and {fps}")
    if not g0 > 1:
        reasons.append(f"g'(0) = {g0} is not > 1")
    if not gk < 1:
        reasons.append(f"g'(kappa) = {gk} is not < 1")
    if abs(gk) >= 1 - 1e-12:
        flags.append(f"|g'(kappa)| = {abs(gk):.6g} >= 1: boundary case for contraction near kappa")
    delta0 = k / 10.0
    C, theta = holder_estimate(bf, k, delta0)
    return MonostabilityReport(k, g0, gk, C, theta, delta0, not reasons, [0.0, *fps], flags, reasons)


# --------------------------------------------------------------------------- #
# Interval constants and (B1)-(B4)
# --------------------------------------------------------------------------- #


@dataclass
class IntervalData:
    kappa: float
    M_g: float
    m_g: float
    L_I: float
    zeta1: float
    zeta2: float
    g_star_plus: float
    K: float
    m_K: float
    B_violations: dict = field(default_factory=dict)  # for the proposal (m_g, M_g)
    B_final_violations: list = field(default_factory=list)
    zeta_source: str = "m_g, M_g"
    notes: list = field(default_factory=list)

    @property
    def I_g(self) -> tuple[float, float]:
        return (self.m_g, self.M_g)

    @property
    def contraction(self) -> bool:
        return self.L_I < 1

    def as_dict(self):
        d = dict(self.__dict__)
        d["I_g"] = list(self.I_g)
        return d


def check_B(bf: BirthFunction, z1: float, z2: float, k: float, gsp: float, tol: float = 1e-9) -> list[str]:
    """Items of (B1)-(B4) that fail for the pair (z1, z2)."""
    bad = []
    if not 0 < z1 <= z2:
        return ["need 0 < zeta1 <= zeta2"]
    lo_img = min_on(bf.g, z1, z2)[1]
    hi_img = max_on(bf.g, z1, z2)[1]
    if lo_img < z1 - tol or hi_img > z2 + tol:
        bad.append(f"B1: g([z1,z2]) = [{lo_img:.6g}, {hi_img:.6g}] not inside [{z1:.6g}, {z2:.6g}]")
    if max_on(bf.g, 0.0, z1)[1] > z2 + tol:
        bad.append("B1: g([0,z1]) not inside [0,z2]")
    if min_on(bf.g, z1, z2)[1] < float(bf.g(z1)) - tol:
        bad.append(f"B2: min of g on [z1,z2] is below g(z1) = {float(bf.g(z1)):.6g}")
    # strict inequality g(x) > x away from the fixed points 0 and kappa
    top = min(z1, k)
    if top > 0:
        x = np.linspace(0.0, top, 20001)[1:-1] if top == k else np.linspace(0.0, top, 20001)[1:]
        if np.any(bf.g(x) <= x):
            bad.append("B3: g(x) > x fails on (0, zeta1]")
    g0 = float(bf.dg(0.0))
    if not (1 < g0 <= gsp + tol and math.isfinite(gsp)):
        bad.append(f"B3: need 1 < g'(0) = {g0:.6g} <= g*+ = {gsp:.6g} < inf")
    fps = positive_fixed_points(bf, z2, max(z2, k) / 1e4) if z2 > 0 else []
    if len(fps) != 1 or abs(fps[0] - k) > 1e-8 * max(1, k):
        bad.append(f"B4: fixed points in (0, zeta2] are {fps}, expected only kappa")
    return bad


def interval_data(bf: BirthFunction) -> IntervalData:
    rep = check_M(bf)
    if not rep.passes_M:
        raise DomainError(f"{bf.name} fails (M): {rep.reasons}")
    k = rep.kappa
    M_g = max(max_on(bf.g, 0.0, k)[1], k)
    m_g = min(min_on(bf.g, k, M_g)[1], k) if M_g > k else k
    L_I = lipschitz_on(bf, m_g, M_g)
    gsp = g_star_plus(bf)
    proposal = check_B(bf, m_g, M_g, k, gsp)
    z1, z2, source, final = m_g, M_g, "m_g, M_g", proposal
    if proposal:
        # lower the left end to where g first climbs to m_g; then min over [z1, z2] is attained at z1
        alt = _first_level_crossing(bf, m_g, k)
        if alt is not None:
            alt_bad = check_B(bf, alt, M_g, k, gsp)
            if len(alt_bad) < len(proposal):
                z1, source, final = alt, "first u with g(u) = m_g, M_g", alt_bad
    notes = []
    if L_I >= 1:
        notes.append(f"L_I = {L_I:.6g} >= 1: g is not a contraction on I_g, global stability hypotheses fail")
    return IntervalData(
        kappa=k, M_g=M_g, m_g=m_g, L_I=L_I, zeta1=z1, zeta2=z2, g_star_plus=gsp,
        K=M_g, m_K=m_g, B_violations={"proposal": proposal}, B_final_violations=final, zeta_source=source,
        notes=notes,
    )


def _first_level_crossing(bf: BirthFunction, level: float, k: float) -> float | None:
    u = np.linspace(0.0, k, 20001)
    above = np.nonzero(bf.g(u) >= level)[0]
    if above.size == 0 or above[0] == 0:
        return None
    i = above[0]
    return brentq(lambda s: float(bf.g(s)) - level, u[i - 1], u[i], xtol=1e-15)


# --------------------------------------------------------------------------- #
# Monotone upper envelope
# --------------------------------------------------------------------------- #


def envelope_upper(bf: BirthFunction) -> BirthFunction:
    """Running maximum  ḡ(u) = max_{s in [0, u]} g(s).

    For a unimodal g this is g up to its peak and constant after it.
    """
    peak = bf.peak
    if peak is None:
        k = kappa(bf)
        u = np.linspace(0.0, 10.0 * k, SCAN_POINTS + 1)
        gv = bf.g(u)
        if np.all(np.diff(gv) >= 0):
            peak = math.inf
        else:
            return _tabulated_envelope(bf, u, gv)
    if math.isinf(peak):
        return bf
    top = float(bf.g(peak))

    def gbar(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < peak, bf.g(np.minimum(u, peak)), top)

    def dgbar(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < peak, bf.dg(np.minimum(u, peak)), 0.0)

    env = BirthFunction(
        Family.CUSTOM_MONOTONE,
        {"u_max": max(10.0 * top, 10.0)},
        gbar,
        dgbar,
        name=f"envelope({bf.name})",
        kappa_exact=None,
        lipschitz_exact=None,
        peak=math.inf,
        scale=dict(bf.scale),
    )
    try:
        k = kappa(bf)
        env.kappa_exact = top if top >= k and peak < k else k
        env.lipschitz_exact = lipschitz_on(bf, 0.0, min(peak, 10.0 * k))
        env.family = Family.CUSTOM_MONOTONE
    except ModelError:
        pass
    return env


def _tabulated_envelope(bf, u, gv):
    # put the exact local maxima into the table so the plateaus are not sampled low
    ends = np.nonzero((gv[1:-1] >= gv[:-2]) & (gv[1:-1] > gv[2:]))[0] + 1
    extra = [max_on(bf.g, u[i - 1], u[i + 1], 64) for i in ends]
    if extra:
        u = np.concatenate([u, [e[0] for e in extra]])
        gv = np.concatenate([gv, [e[1] for e in extra]])
        order = np.argsort(u, kind="stable")
        u, gv = u[order], gv[order]
    run = np.maximum.accumulate(gv)

    def gbar(x):
        x = np.asarray(x, dtype=float)
        # between nodes the table undershoots a concave rise; g itself is exact there
        inside = np.maximum(np.interp(x, u, run), np.where(x <= u[-1], bf.g(np.minimum(x, u[-1])), 0.0))
        return np.where(x <= u[-1], inside, run[-1])

    def dgbar(x):
        x = np.asarray(x, dtype=float)
        slope = np.gradient(run, u)
        return np.interp(x, u, slope)

    return BirthFunction(Family.CUSTOM_MONOTONE, {"u_max": float(u[-1])}, gbar, dgbar,
                         name=f"envelope({bf.name})", peak=math.inf, scale=dict(bf.scale))


# --------------------------------------------------------------------------- #
# Summary table
# --------------------------------------------------------------------------- #


def constant_table(bf: BirthFunction, h: float) -> dict:
    rep = check_M(bf)
    out = {
        "family": bf.family.value,
        "params": dict(bf.params),
        "h": h,
        "kappa": rep.kappa,
        "g_prime_0": rep.g_prime_0,
        "g_prime_kappa": rep.g_prime_kappa,
        "passes_M": rep.passes_M,
        "M_flags": rep.flags,
        "M_reasons": rep.reasons,
    }
    if not rep.passes_M:
        return out
    L_g = lipschitz_global(bf)
    idata = interval_data(bf)
    out.update(
        L_g=L_g,
        M_g=idata.M_g,
        m_g=idata.m_g,
        L_I=idata.L_I,
        zeta1=idata.zeta1,
        zeta2=idata.zeta2,
        zeta_source=idata.zeta_source,
        B_violations=idata.B_final_violations,
        g_star_plus=idata.g_star_plus,
        interval_notes=idata.notes,
        c_L_g=speed_threshold(L_g, h) if L_g > 1 else None,
        c_g_star_plus=speed_threshold(idata.g_star_plus, h) if idata.g_star_plus > 1 else None,
    )
    return out
