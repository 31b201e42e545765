"""End-to-end acceptance criteria; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import math
import time

import numpy as np
import pytest

import oracles as O
from semiwave.birthfuncs import envelope_upper, kappa, mackey_glass, nicholson
from semiwave.charspec import (
    LinearCoefficients,
    check_gauss_bounds,
    gamma_root,
    log_asymptotics_ratio,
    solve_scalar_char,
    speed_data,
    speed_threshold,
)
from semiwave.halanay import ScalarDDE, check_halanay_many
from semiwave.linsolve import HistoryField, solve_fd, solve_spectral, verify_asymptotic_profile, verify_decay
from semiwave.mol import GridSpec, choose_n_delay
from semiwave.rdwave import (
    PerturbationSpec,
    check_comparison,
    comoving_grid,
    compute_profile,
    experiment_global_stability,
    experiment_leading_edge,
    experiment_uniqueness,
    glued_ramp_datum,
    logistic_datum,
    n_delay_for,
)


def report(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, detail


def gaussian(x):
    return np.exp(-x * x) / math.sqrt(math.pi)


def test_1_characteristic_roots():
    rng = np.random.default_rng(1)
    a = rng.uniform(-20, 20, 1000)
    b = rng.uniform(0, 20, 1000)
    h = rng.uniform(1e-2, 10, 1000)
    # a few exact balances to exercise the lam = 0 law
    a[:10] = -b[:10]
    t0 = time.perf_counter()
    lam = np.array([solve_scalar_char(*t) for t in zip(a, b, h)])
    dt = time.perf_counter() - t0
    res = np.abs(lam - a - b * np.exp(-h * lam)) / (1 + np.abs(lam))
    signs = np.all((lam <= 0) == (-a >= b)) and np.all((lam == 0) == (-a == b))
    ok = res.max() <= 1e-12 and signs and dt < 1.0
    report(1, ok, f"max scaled residual {res.max():.2e}, sign laws {signs}, {dt:.3f} s")


def test_2_sandwich_bounds():
    zetas = np.concatenate(([0.0], np.geomspace(1e-3, 1e3, 199)))
    n_viol = 0
    for p, q, h in [(-2, 1, 1), (-1, 1, 0.5), (-3, 0.5, 2)]:
        n_viol += len(check_gauss_bounds(LinearCoefficients(p=p, q=q, h=h), zetas).violations)
    errs = []
    for p, q, h in [(-2, 1, 1), (-1, 1, 0.5)]:
        r = log_asymptotics_ratio(LinearCoefficients(p=p, q=q, h=h), 1e4)
        errs.append(abs(r / (-2 / h) - 1))
    ok = n_viol == 0 and max(errs) < 0.03
    report(2, ok, f"{n_viol} violations over 600 samples, log-ratio errors {', '.join(f'{e:.1e}' for e in errs)}")


def test_3_halanay_certification():
    rng = np.random.default_rng(3)
    probs = []
    for _ in range(1000):
        h = rng.uniform(0.1, 2.0)
        sigma = complex(rng.uniform(-4, 1), rng.uniform(-5, 5))
        k = rng.uniform(0, 3) * np.exp(1j * rng.uniform(-np.pi, np.pi))
        c = rng.normal(size=3) + 1j * rng.normal(size=3)
        s = np.linspace(-h, 0, 33)
        hist = c[0] + c[1] * np.cos(rng.uniform(0, 6) * s / h) + c[2] * s / h
        probs.append(ScalarDDE(sigma, k, h, hist, t_end=8 * h, dt=h / 32))
    t0 = time.perf_counter()
    reps = check_halanay_many(probs, rtol=1e-6)
    dt = time.perf_counter() - t0
    fails = sum(not r.passed for r in reps)
    report(3, fails == 0 and dt < 30, f"{fails} failures in 1000 cases, worst ratio "
                                      f"{max(r.worst_ratio for r in reps):.6f}, {dt:.2f} s")


def test_4_linear_decay():
    g = GridSpec.centered(160.0, 2048)
    co = LinearCoefficients(p=-2.0, q=1.0, h=1.0)
    t0 = time.perf_counter()
    rep = verify_decay(co, g, HistoryField.constant(g, 1.0, 64, gaussian(g.x)), 40.0)
    dt = time.perf_counter() - t0
    rate_rel = abs(rep.fit.rate / O.GAMMA_M2_1_1 - 1)
    ok = rate_rel < 0.05 and rep.power_error < 0.1 and rep.bound_holds and dt < 120
    report(4, ok, f"rate {rep.fit.rate:.5f} (rel err {rate_rel:.4f}), power {rep.fit.power:.4f}, "
                  f"{len(rep.violations)} bound violations, {dt:.1f} s")


def test_5_critical_case():
    g = GridSpec.centered(160.0, 2048)
    co = LinearCoefficients(p=-1.0, q=1.0, h=1.0)
    rep = verify_decay(co, g, HistoryField.constant(g, 1.0, 64, gaussian(g.x)), 40.0)
    ok = gamma_root(co).gamma == 0.0 and abs(rep.fit.rate) <= 0.02 and rep.power_error <= 0.15
    report(5, ok, f"rate {rep.fit.rate:.5f}, power {rep.fit.power:.4f}")


def test_6_limit_profile():
    g = GridSpec.centered(128.0, 2048)
    # compact smooth datum of unit mass
    bump = np.where(np.abs(g.x) < 1, np.cos(0.5 * np.pi * g.x) ** 2, 0.0)
    bump /= bump.sum() * g.dx
    r = verify_asymptotic_profile(LinearCoefficients(p=-2.0, q=1.0, h=1.0), g, bump, [20, 40, 60])
    heat = verify_asymptotic_profile(LinearCoefficients(p=0.0, q=0.0, h=1.0), g, gaussian(g.x), [50.0],
                                     probes=[0.0])
    ok = r.rel_error[-1] < 0.05 and r.decreasing and heat.rel_error[0] < 0.02
    report(6, ok, f"profile errors {np.round(r.rel_error, 5).tolist()} at t=20,40,60; "
                  f"heat error {heat.rel_error[0]:.5f} at t=50")


def test_7_backend_equivalence():
    rng = np.random.default_rng(7)
    g = GridSpec.centered(32.0, 256)
    worst = -np.inf
    for _ in range(20):
        p = rng.uniform(-2, 0)
        q = -p * rng.uniform(0, 1)
        h = rng.uniform(0.25, 1.5)
        co = LinearCoefficients(m=rng.uniform(-1, 1), p=p, q=q, d=int(rng.integers(0, 5)) * g.dx, h=h)
        init = HistoryField.constant(g, h, choose_n_delay(h, g.dx), gaussian(g.x))
        T = round(3.0 / init.dt) * init.dt
        a = solve_fd(co, g, init, T, out_times=[T]).at(T)
        b = solve_spectral(co, g, init, T, out_times=[T]).at(T)
        worst = max(worst, np.max(np.abs(a - b)) / max(1e-5, 5 * g.dx**2))
    report(7, worst <= 1.0, f"worst sup difference / tolerance = {worst:.3f} over 20 sets")


@pytest.fixture(scope="module")
def p2_front():
    return compute_profile(nicholson(2.0), O.C_THRESH[(2.0, 1.0)] + 0.5, 1.0)


def test_8_leading_edge(p2_front):
    t0 = time.perf_counter()
    rep = experiment_leading_edge(p2_front.problem(nicholson(2.0)), PerturbationSpec(0.05, -10.0), 20.0)
    dt = time.perf_counter() - t0
    ok = rep.majorized and rep.fit.rate <= rep.gamma + 0.05 and dt < 300
    report(8, ok, f"{rep.violations} majorization violations, gamma {rep.gamma:.2e}, "
                  f"fitted rate {rep.fit.rate:.4f}, {dt:.1f} s")


@pytest.mark.parametrize("p", [2.0, math.exp(1.5)], ids=["p2", "p_e1.5"])
def test_9_global_stability(p):
    bf = nicholson(p)
    c = speed_threshold(p, 0.5) + 1.0
    pr = compute_profile(bf, c, 0.5)
    rep = experiment_global_stability(pr.problem(bf), PerturbationSpec(0.1, 5.0, center=10.0, width=3.0), 30.0,
                                      profile=pr)
    ok = rep.envelope_holds and rep.gamma0 > 0 and rep.rate_ok and rep.range_check["passed"]
    report(9, ok, f"p={p:.4f}: L_I {rep.L_I:.4f}, gamma0 {rep.gamma0:.4f}, fitted tail rate {rep.fit_rate:.4f}, "
                  f"{len(rep.violations)} envelope violations, range {rep.range_check['min']:.5f}.."
                  f"{rep.range_check['max']:.5f}")


def test_10_uniqueness():
    bf = nicholson(2.0)
    c = O.C_THRESH[(2.0, 1.0)] + 0.5
    k = kappa(bf)
    lam1 = speed_data(c, 2.0, 1.0).lambda1
    rep = experiment_uniqueness(bf, c, 1.0, [logistic_datum(k, lam1), glued_ramp_datum(k, lam1)], relax_time=60.0)
    ok = rep.hypothesis_ok and rep.passed
    report(10, ok, f"anchored distance {rep.distance:.2e}, gap share {rep.gap_share:.1e}, "
                   f"converged {rep.conclusive}")


def test_11_comparison():
    rng = np.random.default_rng(11)
    c, h = 1.5, 1.0
    grid = comoving_grid(c, h, -15, 15, 0.1)
    N = n_delay_for(h, grid)
    z = grid.x
    worst = 0.0
    for i in range(50):
        kind = i % 3
        if kind == 0:
            g1 = nicholson(rng.uniform(1.5, math.exp(2)))
            g2 = envelope_upper(g1)
        elif kind == 1:
            # p <= e keeps kappa <= 1, and data <= 1 stay where u e^{-u} is increasing
            p1 = rng.uniform(1.2, 2.5)
            g1, g2 = nicholson(p1), nicholson(rng.uniform(p1, math.e))
        else:
            g1 = mackey_glass(rng.uniform(1.5, 4), 1.0, rng.uniform(2, 6))
            g2 = envelope_upper(g1)
        top = 0.9 if kind == 1 else 1.5 * kappa(g2)
        d1 = np.repeat((top * rng.uniform(0.2, 1) * (0.5 + 0.5 * np.tanh(z - rng.uniform(-5, 5))))[None, :],
                       N + 1, axis=0)
        d2 = d1 + rng.uniform(0, 0.1) * rng.random(d1.shape)
        rep = check_comparison(g1, g2, c, h, grid, d1, d2, 3.0)
        worst = max(worst, rep.max_violation)
    report(11, worst <= 1e-9, f"max order violation {worst:.2e} over 50 trials")
