"""Independent reference values for the tests.

Closed forms, brentq brackets and values frozen from 40-digit mpmath solves
of the defining equations. None of this calls into the package solvers.
"""

import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

# mpmath, 40 digits: lam + 2 = e^{-lam}
GAMMA_M2_1_1 = -0.44285440100238858
EPS_M2_1_1 = 0.39106103320514683
A0_M2_1_1 = 0.79955387545143126
# lam = -4 - 2 + e^{-lam}
LAMBDA_ZETA2 = -1.5033358269938387
# E_c = -l^2 + c l + 1 - L e^{-l c h} with E_c = E_c' = 0
C_THRESH = {(2.0, 1.0): 0.83255461115769776, (2.0, 0.5): 1.1270775511105518, (math.exp(1.5), 1.0): 1.2247448713915890}
# roots of E_c for c = 3, L = 2, h = 1
L1_3_2_1 = 0.12721696144166290
L2_3_2_1 = 3.3027480341205578
# Nicholson p = e^{1.5}
NICH15_MG = math.exp(0.5)
NICH15_mg = 1.4208833125339968
NICH15_LI = 0.55907401960807982


def char_root(a, b, h):
    """brentq on lam - a - b e^{-h lam} over [a, max(0, a+b)] widened a little."""
    if b == 0:
        return a
    f = lambda lam: lam - a - b * math.exp(-h * lam)
    lo, hi = a - 1e-9, max(0.0, a + b) + 1e-9
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def speed_threshold_scan(L, h):
    """Grid scan of max_lam E_c(lam) over c in [0, 5], then brentq on the max."""
    def top(c):
        r = minimize_scalar(lambda l: -(-l * l + c * l + 1 - L * math.exp(-l * c * h)), bounds=(0.0, 10.0),
                            method="bounded", options={"xatol": 1e-12})
        return -r.fun
    cs = np.linspace(1e-6, 5.0, 501)
    vals = np.array([top(c) for c in cs])
    j = int(np.argmax(vals >= 0))
    return brentq(top, cs[j - 1], cs[j], xtol=1e-13)


def heat_sup(mass, t):
    """Centre value of a point mass under the heat flow."""
    return mass / math.sqrt(4 * math.pi * t)
