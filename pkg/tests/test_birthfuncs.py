import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from semiwave.birthfuncs import (
    Family,
    check_B,
    check_M,
    constant_table,
    custom,
    envelope_upper,
    g_prime_kappa,
    g_star_plus,
    interval_data,
    kappa,
    lipschitz_global,
    lipschitz_on,
    mackey_glass,
    nicholson,
)
from semiwave.errors import DomainError, ModelError

finite = dict(allow_nan=False, allow_infinity=False)

nicholson_p = st.floats(1.2, math.exp(2.0), **finite)
mg_params = st.tuples(st.floats(1.2, 6, **finite), st.floats(0.3, 3, **finite), st.floats(0.5, 6, **finite))


def test_kappa_examples():
    assert kappa(nicholson(math.e)) == pytest.approx(1.0, abs=1e-15)
    assert kappa(mackey_glass(2.0, 1.0, 2.0)) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ModelError):
        kappa(nicholson(1.0))


def test_custom_kappa_by_bisection():
    bf = custom(lambda u: 3 * u / (1 + u), lambda u: 3 / (1 + u) ** 2)
    assert kappa(bf) == pytest.approx(2.0, abs=1e-12)


def test_lipschitz_examples():
    assert lipschitz_global(nicholson(3.7)) == 3.7
    assert lipschitz_global(mackey_glass(2.0, 1.0, 1.0)) == 2.0
    assert lipschitz_global(custom(lambda u: 2 * u, lambda u: 2 + 0 * u)) == pytest.approx(2.0)


def test_lipschitz_by_sampling_small_overestimate():
    # MG with n = 4: the sup of |g'| is interior; compare with a fine brute-force scan
    bf = mackey_glass(2.0, 1.0, 4.0)
    u = np.linspace(0, 10 * kappa(bf), 2_000_001)
    brute = np.max(np.abs(bf.dg(u)))
    L = lipschitz_global(bf)
    assert brute <= L * (1 + 1e-12)
    assert L <= brute * 1.001


def test_interval_data_monotone_case():
    d = interval_data(nicholson(2.0))
    k = math.log(2)
    assert d.kappa == pytest.approx(k, abs=1e-15)
    assert d.M_g == pytest.approx(k, abs=1e-12) and d.m_g == pytest.approx(k, abs=1e-12)
    assert d.L_I == pytest.approx(1 - k, abs=1e-9)
    assert not d.B_final_violations


def test_interval_data_oscillating_case():
    d = interval_data(nicholson(math.exp(1.5)))
    assert d.kappa == pytest.approx(1.5, abs=1e-14)
    assert d.M_g == pytest.approx(O.NICH15_MG, abs=1e-10)
    assert d.m_g == pytest.approx(O.NICH15_mg, abs=1e-10)
    assert d.L_I == pytest.approx(O.NICH15_LI, abs=1e-9)
    assert d.contraction
    assert d.zeta1 <= d.zeta2
    assert not d.B_final_violations


def test_interval_data_non_contraction_reported():
    d = interval_data(nicholson(math.exp(2.2)))
    assert d.L_I == pytest.approx(math.exp(0.2), abs=1e-9)  # |g'| peaks at u = 2 inside I_g
    assert not d.contraction
    assert any("not a contraction" in n for n in d.notes)


def test_check_M_examples():
    r = check_M(nicholson(2.0))
    assert r.passes_M and r.g_prime_0 == 2.0
    assert r.g_prime_kappa == pytest.approx(1 - math.log(2), abs=1e-15)
    assert r.holder_theta == pytest.approx(1.0, abs=1e-3)
    assert r.delta0 == pytest.approx(math.log(2) / 10)
    r = check_M(nicholson(0.9))
    assert not r.passes_M and r.reasons
    r = check_M(mackey_glass(2.0, 1.0, 4.0))
    assert r.passes_M
    assert r.g_prime_kappa == pytest.approx(-1.0, abs=1e-15)
    assert r.flags


def test_g_prime_kappa_closed_forms():
    for bf in (nicholson(3.3), mackey_glass(2.5, 0.7, 3.0)):
        assert g_prime_kappa(bf) == pytest.approx(float(bf.dg(kappa(bf))), abs=1e-12)


def test_envelope_examples():
    bf = mackey_glass(2.0, 1.0, 1.0)
    assert envelope_upper(bf) is bf
    bf = nicholson(math.exp(1.5))
    env = envelope_upper(bf)
    u = np.linspace(0, 5, 501)
    np.testing.assert_allclose(env.g(u), np.where(u <= 1, bf.g(u), math.exp(0.5)), atol=1e-15)
    assert kappa(env) == pytest.approx(O.NICH15_MG, abs=1e-12)


def test_envelope_tabulated_for_custom():
    bf = custom(lambda u: 4 * u * np.exp(-u), lambda u: 4 * (1 - u) * np.exp(-u))
    env = envelope_upper(bf)
    u = np.linspace(0, 6, 601)
    assert np.all(np.diff(env.g(u)) >= -1e-12)
    assert np.all(env.g(u) >= bf.g(u) - 1e-12)


def test_constant_table_keys():
    t = constant_table(nicholson(2.0), 1.0)
    for key in ("kappa", "L_g", "g_prime_0", "g_prime_kappa", "M_g", "m_g", "L_I", "zeta1", "zeta2",
                "g_star_plus", "c_L_g", "c_g_star_plus"):
        assert key in t
    assert t["kappa"] == pytest.approx(math.log(2))
    assert t["c_L_g"] == pytest.approx(O.C_THRESH[(2.0, 1.0)], abs=1e-10)


def test_interval_data_needs_M():
    with pytest.raises(DomainError):
        interval_data(nicholson(0.9))


def test_check_B_reports_items():
    bf = nicholson(2.0)
    k = math.log(2)
    assert check_B(bf, k, k, k, g_star_plus(bf)) == []
    items = [s[:2] for s in check_B(bf, 0.1, 0.5, k, g_star_plus(bf))]
    assert items == ["B1", "B4"]
    assert check_B(bf, 0.5, 0.2, k, 2.0) == ["need 0 < zeta1 <= zeta2"]


def _families():
    return st.one_of(nicholson_p.map(nicholson), mg_params.map(lambda t: mackey_glass(*t)))


@settings(max_examples=30)
@given(_families(), st.integers(0, 2**31 - 1))
def test_family_invariants(bf, seed):
    assert float(bf.g(0.0)) == 0.0
    k = kappa(bf)
    assert abs(float(bf.g(k)) - k) <= 1e-12 * max(1, k)
    L = lipschitz_global(bf)
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0, 10 * k, (2, 10_000))
    assert np.all(np.abs(bf.g(u) - bf.g(v)) <= L * np.abs(u - v) * (1 + 1e-9) + 1e-15)


@settings(max_examples=20)
@given(_families(), st.integers(0, 2**31 - 1))
def test_envelope_invariants(bf, seed):
    env = envelope_upper(bf)
    k = kappa(bf)
    u = np.linspace(0, 10 * k, 5001)
    assert np.all(np.diff(env.g(u)) >= -1e-12)
    assert np.all(env.g(u) >= bf.g(u) - 1e-12)
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 10 * k, (2, 2000))
    L = lipschitz_global(bf)
    assert np.all(np.abs(env.g(a) - env.g(b)) <= L * np.abs(a - b) * (1 + 1e-9) + 1e-15)


@settings(max_examples=20)
@given(_families())
def test_star_plus_vs_slope_at_zero(bf):
    gsp = g_star_plus(bf)
    g0 = float(bf.dg(0.0))
    assert gsp >= g0 - 1e-12
    u = np.linspace(1e-6, 10 * kappa(bf), 100_001)
    subtangent = bool(np.all(bf.g(u) <= g0 * u * (1 + 1e-12)))
    assert subtangent == (gsp <= g0 * (1 + 1e-9))


@settings(max_examples=20)
@given(_families())
def test_B_holds_when_validated(bf):
    r = check_M(bf)
    if not r.passes_M:
        return
    d = interval_data(bf)
    if d.B_final_violations:
        return
    assert check_B(bf, d.zeta1, d.zeta2, d.kappa, d.g_star_plus) == []
    assert d.m_g <= d.kappa <= d.M_g
    assert d.zeta1 <= d.zeta2


def test_rescaling_recorded():
    bf = nicholson(8.0, delta=2.0)
    assert bf.params["p"] == 4.0
    assert bf.scale["time"] == 2.0
    assert bf.family is Family.NICHOLSON


def test_lipschitz_on_degenerate_interval():
    bf = nicholson(2.0)
    k = math.log(2)
    assert lipschitz_on(bf, k, k) == pytest.approx(1 - k, abs=1e-15)
