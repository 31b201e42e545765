import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from semiwave.birthfuncs import custom, envelope_upper, g_star_plus, interval_data, kappa, nicholson
from semiwave.charspec import LinearCoefficients, speed_data, speed_threshold
from semiwave.errors import ConfigError, NumericalError
from semiwave.linsolve import HistoryField, solve_fd
from semiwave.rdwave import (
    ComovingProblem,
    PerturbationSpec,
    anchored,
    check_comparison,
    comoving_grid,
    compute_profile,
    experiment_global_stability,
    experiment_leading_edge,
    experiment_uniqueness,
    glued_ramp_datum,
    logistic_datum,
    n_delay_for,
    profile_residual,
    range_check,
    solve_comoving,
    solve_lab,
    weighted_gap_share,
)

finite = dict(allow_nan=False, allow_infinity=False)

C_P2 = O.C_THRESH[(2.0, 1.0)] + 0.5


def identity():
    return custom(lambda u: u, lambda u: np.ones_like(u), name="identity")


def bent():
    # g'(0) = 2 but g(u)/u peaks near 3.236 at u = 0.618: not subtangential
    return custom(lambda u: (4 * u * u + 2 * u) / (1 + u * u), lambda u: (8 * u + 2 - 2 * u * u) / (1 + u * u) ** 2,
                  name="bent")


@pytest.fixture(scope="module")
def small():
    c, h = 1.5, 1.0
    grid = comoving_grid(c, h, -20, 20, 0.1)
    return c, h, grid, n_delay_for(h, grid)


@pytest.fixture(scope="module")
def p2_profile():
    return compute_profile(nicholson(2.0), C_P2, 1.0)


def test_grid_snaps_shift(small):
    c, h, grid, _ = small
    assert abs(c * h / grid.dx - round(c * h / grid.dx)) < 1e-9
    assert np.min(np.abs(grid.x)) < 1e-12


def test_identity_birth_matches_linear_solver(small):
    c, h, grid, N = small
    hist = HistoryField.constant(grid, h, N, np.exp(-grid.x**2))
    a = solve_comoving(ComovingProblem(identity(), c, h, grid, hist, guard_max=10.0), 5.0, out_every=1.0)
    co = LinearCoefficients(m=-c, p=-1.0, q=1.0, d=-c * h, h=h)
    b = solve_fd(co, grid, hist, 5.0, out_every=1.0, midpoint="linear", cfl=1.0)
    assert np.array_equal(a.times, b.times)
    assert np.max(np.abs(a.slices - b.slices)) < 1e-6


def test_zero_history_stays_zero(small):
    c, h, grid, N = small
    prob = ComovingProblem(nicholson(math.exp(1.5)), c, h, grid, HistoryField.constant(grid, h, N, np.zeros(grid.n)))
    assert np.all(solve_comoving(prob, 3.0, out_every=0.5).slices == 0.0)


def test_kappa_is_discrete_equilibrium(small):
    c, h, grid, N = small
    bf = nicholson(math.exp(1.5))
    k = kappa(bf)
    K = round(c * h / grid.dx)
    r = profile_residual(np.full(grid.n, k), bf, c, h, grid.dx)
    # the Dirichlet ghost and the zero fill left of the grid only touch nodes 0..K
    assert np.max(np.abs(r[K + 1:])) < 1e-13
    hist = HistoryField.constant(grid, h, N, np.full(grid.n, k))
    steps = 5
    u = solve_comoving(ComovingProblem(bf, c, h, grid, hist), steps * hist.dt).slices[-1]
    # each RK4 step reaches 4 cells, the delayed term K more: beyond that the state is untouched
    reach = K + 4 * steps + 1
    assert np.max(np.abs(u[reach:] - k)) <= 4 * np.finfo(float).eps * k


@settings(max_examples=10)
@given(st.floats(1.5, math.exp(2.0), **finite), st.integers(0, 2**31 - 1))
def test_nonnegative_for_nonnegative_data(p, seed):
    c, h = 1.5, 1.0
    grid = comoving_grid(c, h, -10, 10, 0.2)
    N = n_delay_for(h, grid)
    rng = np.random.default_rng(seed)
    hist = HistoryField(grid, h, rng.random((N + 1, grid.n)) * 2 * kappa(nicholson(p)))
    s = solve_comoving(ComovingProblem(nicholson(p), c, h, grid, hist), 3.0, out_every=0.5)
    assert s.slices.min() >= 0.0


def test_shift_must_align():
    grid = comoving_grid(1.5, 1.0, -10, 10, 0.1)
    N = n_delay_for(1.0, grid)
    hist = HistoryField.constant(grid, 1.0, N, np.zeros(grid.n))
    prob = ComovingProblem(nicholson(2.0), 1.37, 1.0, grid, hist)
    with pytest.raises(ConfigError):
        solve_comoving(prob, 1.0)


def test_blow_up_guard_reports_time(small):
    c, h, grid, N = small
    grow = custom(lambda u: 3 * u, lambda u: 3 + 0 * u, name="linear growth")
    prob = ComovingProblem(grow, c, h, grid, HistoryField.constant(grid, h, N, np.ones(grid.n)), guard_max=5.0)
    with pytest.raises(NumericalError) as e:
        solve_comoving(prob, 20.0)
    assert 0 < e.value.last_time < 20.0


def test_lab_frame_front_translates(p2_profile):
    pr = p2_profile
    bf, c, h = nicholson(2.0), pr.c, pr.h
    hist = HistoryField.from_function(pr.grid, h, pr.n_delay, lambda s, x: pr.at(x + c * s))
    s = solve_lab(bf, h, pr.grid, hist, 4.0, out_every=1.0)
    for t, u in zip(s.times, s.slices):
        assert np.max(np.abs(u - pr.at(pr.z + c * t))) < 1e-4


def test_profile_monotone_wavefront(p2_profile):
    # at c = 3 the approach to kappa on the right is slow (about e^{-0.18 z}), hence the wider window
    pr = compute_profile(nicholson(2.0), 3.0, 1.0, z_max=150.0)
    for p in (pr, p2_profile):
        assert p.converged and p.residual < 1e-6
        assert p.is_wavefront and p.tail_ok
        assert abs(p.anchor) < 1e-12
        assert np.all(np.diff(p.psi) >= -1e-12)
        assert np.all(p.psi > 0)
        assert p.psi[-1] == pytest.approx(math.log(2), abs=1e-6)


def test_residual_is_independent_of_relaxation(p2_profile):
    pr = p2_profile
    r = profile_residual(pr.psi, nicholson(2.0), pr.c, pr.h, pr.grid.dx)
    assert np.max(np.abs(r)) == pytest.approx(pr.residual)
    bumped = pr.psi + 1e-3 * np.exp(-pr.z**2)
    assert np.max(np.abs(profile_residual(bumped, nicholson(2.0), pr.c, pr.h, pr.grid.dx))) > 1e-4


def test_oscillating_profile_range():
    bf = nicholson(math.exp(1.5))
    c = speed_threshold(math.exp(1.5), 1.0) + 0.5
    pr = compute_profile(bf, c, 1.0)
    assert pr.converged and pr.residual < 1e-6
    d = interval_data(bf)
    assert range_check(pr, d.m_g, d.M_g)["passed"]
    assert pr.right_range[0] < d.kappa < pr.right_range[1] or pr.is_wavefront


def test_warns_below_star_threshold():
    bf = bent()
    assert g_star_plus(bf) == pytest.approx(1 + math.sqrt(5), rel=1e-6)
    assert kappa(bf) == pytest.approx(2 + math.sqrt(5), rel=1e-10)
    c = 0.5 * (speed_threshold(2.0, 1.0) + speed_threshold(g_star_plus(bf), 1.0))
    with pytest.warns(RuntimeWarning, match="not guaranteed"):
        pr = compute_profile(bf, c, 1.0, relax_time=2.0, polish=False)
    assert pr.warnings


def test_translation_equivariance():
    bf = nicholson(2.0)
    k = kappa(bf)
    sd = speed_data(C_P2, 2.0, 1.0)
    grid = comoving_grid(C_P2, 1.0, -120, 40)
    a = compute_profile(bf, C_P2, 1.0, grid, datum=logistic_datum(k, sd.lambda1))
    b = compute_profile(bf, C_P2, 1.0, grid, datum=logistic_datum(k, sd.lambda1, z0=7 * grid.dx))
    z = grid.x
    assert np.max(np.abs(anchored(z, a.psi, 0.5 * k) - anchored(z, b.psi, 0.5 * k))) < 1e-10


def test_leading_edge_zero_perturbation(p2_profile):
    rep = experiment_leading_edge(p2_profile.problem(nicholson(2.0)), PerturbationSpec(0.0, -10.0), 2.0)
    assert np.all(rep.weighted_sup == 0.0) and np.all(rep.majorant_sup == 0.0)
    assert rep.majorized


def test_leading_edge_lambda1_is_critical(p2_profile):
    # L_g = g'(0) for Nicholson, so E_c(lambda_1) = 0 and the majorant has -p = q
    rep = experiment_leading_edge(p2_profile.problem(nicholson(2.0)), PerturbationSpec(0.05, -10.0), 10.0)
    assert rep.majorized
    assert abs(rep.gamma) < 1e-9


def test_leading_edge_interior_weight_decays(p2_profile):
    rep = experiment_leading_edge(p2_profile.problem(nicholson(2.0)), PerturbationSpec(0.05, -10.0), 20.0,
                                  lambda_c="peak")
    assert rep.majorized and rep.gamma < 0
    assert rep.fit.rate <= rep.gamma + 0.05


def test_leading_edge_critical_speed():
    bf = nicholson(2.0)
    c = O.C_THRESH[(2.0, 1.0)]
    with pytest.warns(RuntimeWarning):
        pr = compute_profile(bf, c, 1.0)
    rep = experiment_leading_edge(pr.problem(bf), PerturbationSpec(0.05, -10.0), 20.0)
    assert rep.majorized
    assert abs(rep.gamma) < 1e-6
    assert rep.fit.power == pytest.approx(-0.5, abs=0.15)
    assert abs(rep.fit.rate) <= 0.02


def test_perturbation_bounded_by_eta():
    z = np.linspace(-30, 30, 601)
    for shape in ("eta_weighted", "compact_bump", "tail_seeded"):
        spec = PerturbationSpec(0.2, 3.0, shape)
        assert np.all(spec.profile(z, 0.7) <= 0.2 * spec.eta(z, 0.7) + 1e-15)
        assert np.all(spec.profile(z, 0.7) >= 0)
    with pytest.raises(ConfigError):
        PerturbationSpec(-1.0, 0.0)


def test_uniqueness_same_datum():
    bf = nicholson(2.0)
    k = kappa(bf)
    d = logistic_datum(k, speed_data(C_P2, 2.0, 1.0).lambda1)
    rep = experiment_uniqueness(bf, C_P2, 1.0, [d, d])
    assert rep.distance == 0.0 and rep.hypothesis_ok and rep.passed


def test_uniqueness_gate_flags_heavier_tail():
    k = math.log(2)
    lam1 = speed_data(C_P2, 2.0, 1.0).lambda1
    grid = comoving_grid(C_P2, 1.0, -150, 60)
    z = grid.x
    same_tail = weighted_gap_share(z, logistic_datum(k, lam1)(z), glued_ramp_datum(k, lam1)(z), lam1)
    heavy = weighted_gap_share(z, logistic_datum(k, lam1)(z), logistic_datum(k, 0.5 * lam1)(z), lam1)
    assert same_tail < 1e-3 < heavy


def test_comparison_identical(small):
    c, h, grid, N = small
    d = np.repeat((0.5 + 0.5 * np.tanh(grid.x))[None, :], N + 1, axis=0)
    bf = nicholson(2.0)
    rep = check_comparison(bf, bf, c, h, grid, d, d, 3.0)
    assert rep.max_violation == 0.0 and rep.passed


def test_comparison_larger_p_and_envelope(small):
    c, h, grid, N = small
    rng = np.random.default_rng(0)
    d1 = np.repeat(1.2 * (0.5 + 0.5 * np.tanh(grid.x))[None, :], N + 1, axis=0)
    d2 = d1 + 0.05 * rng.random(d1.shape)
    # both Nicholson maps are increasing on [0, 1] and p <= e keeps solutions there
    assert check_comparison(nicholson(2.0), nicholson(2.5), c, h, grid, 0.7 * d1, 0.7 * d2, 5.0).passed
    bf = nicholson(math.exp(1.5))
    rep = check_comparison(bf, envelope_upper(bf), c, h, grid, d1, d2, 5.0)
    assert rep.passed
    # the envelope squeezes the upper solution below M_g + something small
    assert rep.v2_max <= max(np.max(d2), interval_data(bf).M_g) + 1e-9


def test_comparison_rejects_unordered(small):
    c, h, grid, N = small
    d = np.ones((N + 1, grid.n))
    with pytest.raises(ConfigError):
        check_comparison(nicholson(2.0), nicholson(2.0), c, h, grid, d, 0.5 * d, 1.0)
    with pytest.raises(ConfigError):
        check_comparison(nicholson(2.5), nicholson(2.0), c, h, grid, d, d, 1.0)
    with pytest.raises(ConfigError, match="nondecreasing"):
        check_comparison(nicholson(4.0), nicholson(5.0), c, h, grid, 2 * d, 2 * d, 1.0)


def test_global_stability_bounded_when_gamma0_zero():
    # h = 0.5 but c barely above c(L_g): gamma0 may vanish; the envelope is then D <= C q
    bf = nicholson(2.0)
    c = speed_threshold(2.0, 0.5) + 0.05
    pr = compute_profile(bf, c, 0.5)
    rep = experiment_global_stability(pr.problem(bf), PerturbationSpec(0.1, 5.0, center=10.0, width=3.0), 5.0,
                                      profile=pr)
    assert rep.gamma0 >= 0
    assert rep.envelope_holds
