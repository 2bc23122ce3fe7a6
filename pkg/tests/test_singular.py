import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

import oracles
from conftest import A_STAR
from hetlab.maps import ReturnMap, circle_dist
from hetlab.model import ForcingProfile, ModelConfig, derive_constants
from hetlab.singular import (CircleMap, admissibility_transversality, ce_parameter_scan, critical_set,
                             is_diffeomorphism, lattice_phase, lyapunov_1d, misiurewicz_check, mu_lattice,
                             rotation_number, scan_a, singular_limit_convergence, singular_limit_from_config,
                             write_scan_csv)

TWO_PI = 2 * math.pi
DEFAULT = ModelConfig()


def rigid(a):
    return CircleMap(a, 1.0, 0.0, ForcingProfile.const(1.0))


def default_map(a=0.0, L=3.0):
    return CircleMap(a, L, 0.0, ForcingProfile((), (1.0,), 2.0))


def test_from_config_examples():
    h = singular_limit_from_config(DEFAULT, None, 0.0, "F")
    t = np.linspace(0, TWO_PI, 50)
    assert np.allclose(h.lift(t), t - 3 * np.log(2 + np.sin(t)), atol=1e-14)
    assert not h.singular and h.L == 3
    g = singular_limit_from_config(ModelConfig(mu1=0.0, mu2=0.1, omega=2.0), None, 0.4, "G")
    assert g.singular and g.L == 6
    s = np.array([0.3, 1.0, 2.5, 4.0])
    assert np.allclose(g.lift(s), s + 0.4 - 6 * np.log(np.abs(np.sin(s))), atol=1e-14)
    c = singular_limit_from_config(ModelConfig(phi1=ForcingProfile.const(2.0), xi1=0.1, xi2=0.2), None, 0.5)
    assert np.allclose(c.lift(t) - t, 0.8 - 3 * math.log(2), atol=1e-14)
    assert critical_set(c) == []


@pytest.mark.parametrize("a, n, expect", [(0.0, 3, math.exp(-3)), (math.pi, 1, math.exp(-1.5))])
def test_mu_lattice_examples(a, n, expect):
    cfg = DEFAULT.replace(omega=TWO_PI / 3)
    assert mu_lattice(cfg, None, a, n) == pytest.approx(expect, rel=1e-14)


def test_mu_lattice_back_substitution():
    mu = mu_lattice(DEFAULT, None, 1.0, 2)
    assert mu == pytest.approx(math.exp(-(4 * math.pi + 1) / 3), rel=1e-15)
    assert float(circle_dist(-3 * math.log(mu), 1.0)) < 1e-12
    with pytest.raises(ValueError):
        mu_lattice(DEFAULT, None, 1.0, 0)


@given(st.floats(0, TWO_PI, exclude_max=True), st.integers(1, 40), st.floats(0.5, 40))
def test_mu_lattice_properties(a, n, L):
    cfg = DEFAULT.replace(omega=L / 3)
    m0, m1 = mu_lattice(cfg, None, a, n), mu_lattice(cfg, None, a, n + 1)
    assert m1 < m0
    assert float(circle_dist(lattice_phase(cfg, None, m0), a)) < 1e-12 * max(1.0, L * n)


def test_convergence_table_shape_and_exact_zero_height():
    k = derive_constants(DEFAULT)
    rows = singular_limit_convergence(DEFAULT, k, 0.5, [2, 3, 4])
    f1 = [r["f1_sup"] for r in rows]
    assert f1[0] > f1[1] > f1[2]
    ratio = f1[1] / f1[0]
    assert ratio == pytest.approx(math.exp(-TWO_PI * 3 / 3), rel=1e-9)
    # at y = 0 the second component equals h_a once mu sits on the lattice
    mu = rows[1]["mu1"]
    t = np.linspace(0, TWO_PI, 64, endpoint=False)
    _, th, _, _, _ = ReturnMap(DEFAULT.replace(mu1=mu), "F").step(np.zeros_like(t), t)
    h = singular_limit_from_config(DEFAULT, k, 0.5)
    assert np.max(circle_dist(th, h(t))) < 1e-12
    with pytest.raises(ValueError):
        singular_limit_convergence(DEFAULT.replace(mu2=0.1), k, 0.5, [1])


def test_critical_set_default_against_closed_form():
    assert np.allclose(critical_set(default_map()), oracles.default_critical_points(), atol=1e-12)
    for L in (5.0, 30.0):
        ref = oracles.critical_points_scan(lambda t: 1 - L * np.cos(t) / (2 + np.sin(t)))
        got = critical_set(default_map(L=L))
        assert len(got) == 2 and np.allclose(got, ref, atol=1e-11)


def test_critical_set_empty_cases():
    assert critical_set(default_map(L=math.sqrt(3) * 0.99)) == []
    assert critical_set(rigid(0.3)) == []


def test_diffeomorphism_report():
    r = is_diffeomorphism(default_map(L=1.0))
    assert r and r.sup_log_derivative == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert not is_diffeomorphism(default_map(L=2.0))
    assert is_diffeomorphism(rigid(1.0)).margin == pytest.approx(1.0)


def test_singular_family_blows_up_near_zeros():
    for L in (1.0, 5.0):
        g = CircleMap(0.0, L, 0.0, ForcingProfile((), (1.0,)), singular=True)
        for z in (0.0, math.pi):
            for s in (-1e-4, 1e-4, -3e-5, 3e-5):
                assert abs(g.deriv(z + s)) > 1e3


@given(st.floats(-20, 20), st.integers(-4, 4), st.floats(0, 6))
def test_degree_one(t, k, a):
    h = default_map(a, 7.0)
    assert float(h.lift(t + TWO_PI * k)) == pytest.approx(float(h.lift(t)) + TWO_PI * k, abs=1e-9)


@given(st.floats(0, TWO_PI), st.floats(0, 6))
def test_phase_enters_additively(t, a):
    h = default_map(0.0, 7.0)
    d = (float(h.lift(t, a + 1e-6)) - float(h.lift(t, a - 1e-6))) / 2e-6
    assert d == pytest.approx(1.0, abs=1e-7)


def test_rotation_numbers():
    assert rotation_number(rigid(1.0), 1000).rho == pytest.approx(1 / TWO_PI, abs=1e-12)
    assert rotation_number(CircleMap(0.0, 0.0, 0.0, ForcingProfile.const(1.0)), 100).rho == 0.0
    h = default_map(1.0, 0.5)
    r4, r5 = rotation_number(h, 10_000), rotation_number(h, 100_000)
    assert abs(r4.rho - r5.rho) < 1e-3 and r4.error_bound == 1e-4
    est = rotation_number(rigid(TWO_PI * 2 / 7), 7000)
    assert est.rational_candidate == (2, 7)


def test_lyapunov_regimes(certified_map):
    assert lyapunov_1d(default_map(1.0, 0.5)) <= 0.01
    lam = lyapunov_1d(certified_map, n=20_000)
    assert lam > 0.5
    # a critical point that returns to itself gives the -inf sentinel
    c0 = oracles.default_critical_points()[0]
    g = lambda a, k: float(oracles.circle_lift(oracles.circle_lift(oracles.circle_lift(c0, a, 3), a, 3), a, 3)) \
        - c0 - TWO_PI * k
    k = round(g(4.468, 0) / TWO_PI)
    a = brentq(lambda a: g(a, k), 4.462, 4.474, xtol=1e-15)
    assert lyapunov_1d(default_map(a), theta0=c0, burn_in=0, n=30) == -math.inf


def test_lyapunov_under_smooth_conjugacy(certified_map):
    """theta -> theta + 0.3 sin theta: exponents along conjugate orbits agree."""
    phi_d = lambda t: 1 + 0.3 * np.cos(t)
    th, acc, acc_conj = 0.1, 0.0, 0.0
    n = 20_000
    for _ in range(1000):
        th = float(certified_map(th))
    for _ in range(n):
        d = float(certified_map.deriv(th))
        nxt = float(certified_map(th))
        acc += math.log(abs(d))
        acc_conj += math.log(abs(phi_d(nxt) * d / phi_d(th)))
        th = nxt
    assert abs(acc / n - acc_conj / n) < 2e-2
    assert abs(acc / n - lyapunov_1d(certified_map, 0.1, 1000, n)) < 1e-9


def test_misiurewicz_rigid_is_vacuous():
    c = misiurewicz_check(rigid(0.5))
    assert c.status == "certified-to-horizon" and c.flags["vacuous"]


def test_misiurewicz_collision_at_first_step():
    c0, c1 = oracles.default_critical_points()
    a = brentq(lambda a: math.sin((float(oracles.circle_lift(c0, a, 3)) - c1) / 2), 0.0, TWO_PI - 1e-9)
    assert oracles.first_recurrence(oracles.mp_lift_default(a, 3), [c0, c1], 0.01, 5) == (0, 1)
    cert = misiurewicz_check(default_map(a))
    assert cert.status == "refuted"
    assert cert.witness["n"] == 1 and cert.witness["critical_index"] == 0


def test_certified_phase_regression():
    grid = np.linspace(0, TWO_PI, 256, endpoint=False)
    h = default_map(0.0, 30.0)
    first = next(a for a in grid if misiurewicz_check(h.with_a(a)).status == "certified-to-horizon")
    assert first == A_STAR
    assert misiurewicz_check(h.with_a(0.1718)).status == "refuted"


def test_certificate_fields(certified_map):
    c = misiurewicz_check(certified_map)
    d = c.to_dict()
    assert d["status"] == "certified-to-horizon" and d["horizon"] == 50
    assert c.lambda0 > 0 and c.b0 > 0
    assert set(c.flags) >= {"exp(lambda0) > 1", "exp(lambda0/3) > 2", "exp(lambda0) > 2"}


def test_ce_scan(certified_map):
    c = misiurewicz_check(certified_map)
    lam = 0.99 * c.lambda0 / 5
    s30 = ce_parameter_scan(certified_map, lam, lam / 2, horizon=30, b0=c.b0)
    assert s30.fraction > 0 and len(s30.a_values) == int(s30.passed.sum())
    s10 = ce_parameter_scan(certified_map, lam, lam / 2, horizon=10, b0=c.b0)
    s20 = ce_parameter_scan(certified_map, lam, lam / 2, horizon=20, b0=c.b0)
    assert s10.fraction >= s20.fraction >= s30.fraction
    assert not np.any(s30.passed & ~s20.passed)
    strict = ce_parameter_scan(certified_map, 5 * c.lambda0, lam / 2, horizon=30, b0=1.0)
    assert 0.0 <= strict.fraction <= s30.fraction
    assert ce_parameter_scan(rigid(0.0), 0.1, 0.05).fraction == 1.0


def test_transversality(certified_map):
    recs = admissibility_transversality(certified_map, A_STAR)
    assert len(recs) == 2
    for r in recs:
        assert r.direct_term == pytest.approx(1.0, abs=1e-6)
        assert r.passed and abs(r.xi) > 1e-6
    assert admissibility_transversality(rigid(0.0), 0.3) == []


def test_scan_csv(tmp_path):
    rows = scan_a(default_map(L=30.0), np.linspace(0, 1, 5), n=2000)
    assert [r[2] in ("chaotic", "periodic-sink", "neutral") for r in rows] == [True] * 5
    write_scan_csv(rows, tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        r = list(csv.reader(fh))
    assert r[0] == ["a", "lyapunov", "classification", "singular_hits"] and len(r) == 6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 6.2))
def test_rigid_rotation_rho(a):
    assert rotation_number(rigid(a), 2000).rho == pytest.approx(a / TWO_PI, abs=1e-9)
