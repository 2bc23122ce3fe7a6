import csv
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hetlab.errors import DomainError, OutOfSection, SingularHit, StableManifoldHit
from hetlab.maps import (CrossSection, ReturnMap, ReturnMapPoint, circle_dist, compose_F, compose_G,
                         global_map_12, global_map_21, iterate_orbit, jacobian, local_map, return_map_F,
                         return_map_G, write_orbit_csv)
from hetlab.model import ForcingProfile, ModelConfig, SaddleData

TWO_PI = 2 * math.pi
F_CFG = ModelConfig(mu1=0.1)
G_CFG = ModelConfig(mu1=0.0, mu2=0.1)


def test_local_map_examples():
    q, T = local_map(1, ReturnMapPoint(1.0, 0.0, "In1"), F_CFG)
    assert q.y == pytest.approx(0.1, rel=1e-14)
    assert q.theta == pytest.approx(math.log(10), rel=1e-14)
    assert T == pytest.approx(math.log(10), rel=1e-14)
    q, T = local_map(2, ReturnMapPoint(10.0, 1.25, "In2"), F_CFG)
    assert (q.y, q.theta, T) == (pytest.approx(10.0), pytest.approx(1.25), pytest.approx(0.0, abs=1e-15))


def test_local_map_extended_precision():
    cfg = ModelConfig(saddle1=SaddleData(2.3 * 1.1, 1.1), mu1=0.05, omega=3.0)
    q, T = local_map(1, ReturnMapPoint(0.7, 1.0, "In1"), cfg)
    y, th, t = oracles.loc(0.7, 1.0, mp.mpf(2.3) * mp.mpf(1.1), mp.mpf(1.1), mp.mpf(0.05), 3)
    assert q.y == pytest.approx(float(y), rel=1e-13)
    assert q.theta == pytest.approx(float(th % (2 * mp.pi)), rel=1e-13)
    assert T == pytest.approx(float(t), rel=1e-13)


def test_local_map_errors():
    with pytest.raises(StableManifoldHit):
        local_map(1, ReturnMapPoint(0.0, 0.0, "In1"), F_CFG)
    with pytest.raises(StableManifoldHit):
        local_map(1, ReturnMapPoint(-0.1, 0.0, "In1"), F_CFG)
    with pytest.raises(OutOfSection):
        local_map(1, ReturnMapPoint(11.0, 0.0, "In1"), F_CFG)


def test_global_maps():
    assert global_map_12(ReturnMapPoint(0.0, 0.0), F_CFG) == ReturnMapPoint(2.0, 0.0, "In2")
    p = global_map_12(ReturnMapPoint(0.3, math.pi / 2), ModelConfig(mu1=0.05, xi1=0.4))
    assert (p.y, p.theta) == (pytest.approx(3.3), pytest.approx(math.pi / 2 + 0.4))
    p = global_map_12(ReturnMapPoint(0.3, 1.0), ModelConfig(mu1=0.0, mu2=0.2, xi1=0.4, b1=1.5))
    assert (p.y, p.theta) == (pytest.approx(0.45), pytest.approx(1.4))
    q = global_map_21(ReturnMapPoint(0.2, 0.0, "Out2"), G_CFG)
    assert (q.y, q.theta) == (pytest.approx(0.2), 0.0)
    q = global_map_21(ReturnMapPoint(0.2, math.pi / 2, "Out2"), G_CFG)
    assert (q.y, q.theta) == (pytest.approx(1.2), pytest.approx(math.pi / 2))
    q = global_map_21(ReturnMapPoint(0.2, 1.5 * math.pi, "Out2"), G_CFG)
    assert q.y == pytest.approx(-0.8) and q.below_manifold
    with pytest.raises(OutOfSection):
        global_map_12(ReturnMapPoint(9.5, math.pi / 2), F_CFG)


def test_return_map_F_example():
    p = return_map_F(ReturnMapPoint(0.0, 0.0), F_CFG)
    assert p.y == pytest.approx(0.016, rel=1e-13)
    assert p.theta == pytest.approx((3 * math.log(5)) % TWO_PI, rel=1e-13)


def test_return_map_G_example():
    p = return_map_G(ReturnMapPoint(0.0, math.pi / 2, "Out2"), G_CFG)
    assert p.y == pytest.approx(0.001, rel=1e-13)
    assert p.theta == pytest.approx((math.pi / 2 + 3 * math.log(10)) % TWO_PI, rel=1e-13)
    with pytest.raises(SingularHit):
        return_map_G(ReturnMapPoint(0.0, 0.0, "Out2"), G_CFG)


@pytest.mark.parametrize("which, cfg, y, th, phi", [
    ("F", ModelConfig(mu1=0.05), 0.01, 1.3, lambda t: 2 + mp.sin(t)),
    ("G", ModelConfig(mu1=0.0, mu2=0.07), 0.02, 2.0, mp.sin),
])
def test_return_maps_against_extended_precision(which, cfg, y, th, phi):
    mu = cfg.mu1 if which == "F" else cfg.mu2
    yo, to = oracles.return_map(which, y, th, (2, 1, 2, 1), mu, cfg.omega, phi)
    f = return_map_F if which == "F" else return_map_G
    p = f(ReturnMapPoint(y, th, f"Out{1 if which == 'F' else 2}"), cfg)
    assert p.y == pytest.approx(float(yo), rel=1e-12)
    assert p.theta == pytest.approx(float(to % (2 * mp.pi)), rel=1e-12)


def test_return_map_domain_errors():
    with pytest.raises(DomainError):
        return_map_F(ReturnMapPoint(0.1, 0.0), ModelConfig(mu1=0.0, mu2=0.1))
    with pytest.raises(DomainError):
        return_map_G(ReturnMapPoint(0.1, 0.0, "Out2"), ModelConfig(mu1=0.1, mu2=0.0))
    neg = ModelConfig(mu1=0.1, phi1=ForcingProfile((), (1.0,), 0.5))
    with pytest.raises(DomainError):
        return_map_F(ReturnMapPoint(0.0, 1.5 * math.pi), neg)


@settings(max_examples=200)
@given(st.floats(1e-3, 10.0), st.floats(0, TWO_PI, exclude_max=True), st.floats(1e-5, 0.5))
def test_closed_form_equals_point_composition_F(y, th, mu):
    cfg = ModelConfig(mu1=mu)
    p = ReturnMapPoint(y, th)
    a = return_map_F(p, cfg)
    try:
        b = compose_F(p, cfg)
    except OutOfSection:
        return
    assert a.y == pytest.approx(b.y, rel=1e-12)
    assert circle_dist(a.theta, b.theta) <= 1e-12 * max(1.0, abs(b.theta))


@settings(max_examples=200)
@given(st.floats(-10.0, 10.0), st.floats(0, TWO_PI, exclude_max=True), st.floats(1e-5, 0.5))
def test_closed_form_equals_point_composition_G(y, th, mu):
    cfg = ModelConfig(mu1=0.0, mu2=mu)
    p = ReturnMapPoint(y, th, "Out2")
    if abs(y + math.sin(th)) < 1e-6:
        return
    a = return_map_G(p, cfg)
    try:
        b = compose_G(p, cfg)
    except OutOfSection:
        return
    assert a.y == pytest.approx(b.y, rel=1e-12)
    assert circle_dist(a.theta, b.theta) <= 1e-11


@given(st.floats(0.0, 10.0), st.floats(0, TWO_PI), st.integers(-3, 3))
def test_angular_equivariance(y, th, k):
    rm = ReturnMap(F_CFG, "F")
    y1, t1, _, _, _ = rm.step(y, th)
    y2, t2, _, _, _ = rm.step(y, th + TWO_PI * k)
    assert y1 == pytest.approx(y2, rel=1e-12)
    assert float(circle_dist(t1, t2)) < 1e-9


@given(st.floats(0.0, 10.0), st.floats(0, TWO_PI), st.floats(1e-8, 0.5))
def test_F1_nonnegative(y, th, mu):
    p = return_map_F(ReturnMapPoint(y, th), ModelConfig(mu1=mu))
    assert p.y >= 0


def test_F1_rate():
    mus = np.logspace(-2, -6, 5)
    f1 = [return_map_F(ReturnMapPoint(0.3, 1.1), ModelConfig(mu1=m)).y for m in mus]
    slope = np.polyfit(np.log(mus), np.log(f1), 1)[0]
    assert abs(slope - 3) <= 0.01


def test_jacobian_against_finite_differences():
    cfg = ModelConfig(mu1=0.01)
    rm = ReturnMap(cfg, "F")
    rng = np.random.default_rng(3)
    for _ in range(40):
        y, th = rng.uniform(0.5, 5.0), rng.uniform(0, TWO_PI)
        J = jacobian("F", ReturnMapPoint(y, th), cfg)
        h = 1e-6
        cols = []
        for dy, dt in ((h, 0), (0, h)):
            yp, tp, *_ = rm.step(y + dy, th + dt)
            ym, tm, *_ = rm.step(y - dy, th - dt)
            cols.append([(yp - ym) / (2 * h), (tp - tm) / (2 * h)])
        fd = np.array(cols).T
        assert np.linalg.det(J) == pytest.approx(np.linalg.det(fd), rel=1e-5)
        assert np.allclose(J, fd, rtol=1e-5, atol=1e-8 * np.abs(J).max())


def test_jacobian_determinant_ratio_bounded():
    cfg = ModelConfig(mu1=0.01)
    rm = ReturnMap(cfg, "F")
    rng = np.random.default_rng(11)
    y = rng.uniform(0.5, 5.0, (2, 10_000))
    th = rng.uniform(0, TWO_PI, (2, 10_000))
    _, _, ok, J, _ = rm.step(y, th, jac=True)
    det = np.abs(J[0] * J[3] - J[1] * J[2])
    assert ok.all()
    ratio = det[0] / det[1]
    k = float(max(ratio.max(), 1 / ratio.min()))
    assert math.isfinite(k) and k < 1e4


def test_composed_path_with_corrections_and_b():
    cfg = ModelConfig(mu1=0.02, b1=1.1, b2=0.9, eps0=1.0,
                      w_corrections=(ForcingProfile((0.05,)), ForcingProfile(), ForcingProfile(),
                                     ForcingProfile((), (0.02,))))
    rm = ReturnMap(cfg, "F")
    assert not rm.closed
    p = ReturnMapPoint(0.4, 2.0)
    a = return_map_F(p, cfg)
    b = compose_F(p, cfg)
    assert a.y == pytest.approx(b.y, rel=1e-13) and a.theta == pytest.approx(b.theta, rel=1e-13)


def test_cross_section_invariants():
    with pytest.raises(ValueError):
        CrossSection("Out1", (0.5, 1.0))
    with pytest.raises(ValueError):
        CrossSection("In1", (1.0, 0.5))


def test_orbit_csv(tmp_path):
    rows = iterate_orbit(F_CFG, "F", ReturnMapPoint(0.5, 0.0), 5)
    assert len(rows) == 6 and rows[0][0] == 0
    assert rows[1][1] == pytest.approx(return_map_F(ReturnMapPoint(0.5, 0.0), F_CFG).y)
    write_orbit_csv(rows, tmp_path / "o.csv")
    with open(tmp_path / "o.csv") as fh:
        r = list(csv.reader(fh))
    assert r[0] == ["n", "y", "theta", "flight_time"] and len(r) == 7


def test_flight_time_matches_factors():
    cfg = ModelConfig(mu1=0.05)
    p = ReturnMapPoint(0.2, 0.7)
    q = global_map_12(p, cfg)
    r, T1 = local_map(2, q, cfg)
    _, T2 = local_map(1, global_map_21(r, cfg), cfg)
    _, _, _, _, T = ReturnMap(cfg, "F").step(0.2, 0.7)
    assert float(T) == pytest.approx(T1 + T2, rel=1e-12)


def test_flight_time_matches_factors_G():
    cfg = ModelConfig(mu1=0.0, mu2=0.05)
    p = ReturnMapPoint(0.2, 0.7, "Out2")
    r, T1 = local_map(1, global_map_21(p, cfg), cfg, signed=True)
    _, T2 = local_map(2, global_map_12(r, cfg), cfg, signed=True)
    _, _, _, _, T = ReturnMap(cfg, "G").step(0.2, 0.7)
    assert float(T) == pytest.approx(T1 + T2, rel=1e-12)
