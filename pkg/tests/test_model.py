import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hetlab.errors import ConfigError
from hetlab.model import (ForcingProfile, ModelConfig, SaddleData, derive_constants, format_kv, parse_kv,
                          read_config, validate, write_config)

rate = st.floats(0.2, 5.0)
coeffs = st.lists(st.floats(-2, 2), min_size=0, max_size=5)


@st.composite
def dissipative(draw):
    e1, e2 = draw(rate), draw(rate)
    c1 = e1 + draw(st.floats(0.05, 4.0))
    c2 = e2 + draw(st.floats(0.05, 4.0))
    return c1, e1, c2, e2


@pytest.mark.parametrize("rates, K_F, K_G", [
    ((2, 1, 2, 1), 3.0, 3.0),
    ((3, 1, 2, 1), 3.0, 4.0),
])
def test_constants_examples(rates, K_F, K_G):
    k = derive_constants(ModelConfig.from_rates(*rates))
    assert (k.K_F, k.K_G) == (K_F, K_G)


def test_constants_extended_precision():
    k = derive_constants(ModelConfig.from_rates(2.5, 1.5, 2.2, 1.1))
    ref = oracles.constants(2.5, 1.5, 2.2, 1.1)
    for name in ("delta1", "delta2", "delta", "K_F", "K_G"):
        assert getattr(k, name) == pytest.approx(float(ref[name]), rel=1e-15)
    assert k.K_F == pytest.approx(2.24242424242, rel=1e-10)
    assert k.K_G == pytest.approx(2.18181818182, rel=1e-10)


@given(dissipative())
def test_constant_identities(r):
    c1, e1, c2, e2 = r
    k = derive_constants(ModelConfig.from_rates(c1, e1, c2, e2))
    assert k.delta1 * k.delta2 == pytest.approx(k.delta, rel=1e-15)
    assert k.K_F > 0 and k.K_G > 0 and k.delta1 > 1 and k.delta2 > 1
    assert e1 * e2 * k.K_F == pytest.approx(e1 + c2, rel=4e-16, abs=0)
    assert e1 * e2 * k.K_G == pytest.approx(e2 + c1, rel=4e-16, abs=0)


@settings(max_examples=50)
@given(coeffs, coeffs, st.floats(-3, 3), st.integers(1, 3))
def test_profile_derivative_matches_finite_difference(a, b, c, order):
    p = ForcingProfile(a, b, c)
    t = np.linspace(0, 2 * math.pi, 100, endpoint=False)
    h = 1e-5
    lower = p.evaluate(t, order - 1)
    fd = (p.evaluate(t + h, order - 1) - p.evaluate(t - h, order - 1)) / (2 * h)
    exact = p.evaluate(t, order)
    scale = max(np.max(np.abs(exact)), np.max(np.abs(lower)), 1.0)
    assert np.max(np.abs(fd - exact)) <= 1e-6 * scale
    assert np.allclose(p.derivative(order).evaluate(t), exact, atol=1e-12 * scale)


def test_profile_analysis():
    p = ForcingProfile((), (1.0,), 2.0)
    assert p.minimum()[1] == pytest.approx(1.0, abs=1e-12)
    assert p.minimum()[0] == pytest.approx(1.5 * math.pi, abs=1e-6)
    assert p.is_positive() and not p.is_sign_changing()
    assert np.allclose(p.critical_points(), [math.pi / 2, 1.5 * math.pi], atol=1e-12)
    assert p.sup_log_derivative() == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    s = ForcingProfile((), (1.0,))
    assert np.allclose(s.transversal_zeros(), [0.0, math.pi], atol=1e-12)
    assert s.is_sign_changing()
    # a double zero is not transversal
    sq = ForcingProfile((-0.5,), (), 0.5)  # sin^2
    assert not sq.is_sign_changing()


@given(coeffs, coeffs, st.floats(-3, 3), st.floats(-4, 4))
def test_profile_shift_and_scale(a, b, c, phase):
    p = ForcingProfile(a, b, c)
    t = np.linspace(0, 6, 17)
    assert np.allclose(p.shifted(phase).evaluate(t), p.evaluate(t + phase), atol=1e-12)
    assert np.allclose(p.scaled(-2.0).evaluate(t), -2.0 * p.evaluate(t), atol=1e-12)


def test_profile_fit_recovers_series():
    t = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    prof, res = ForcingProfile.fit(t, 2 + np.sin(t), 4)
    assert res < 1e-12
    assert prof.constant == pytest.approx(2, abs=1e-12)
    assert prof.sine_coeffs[0] == pytest.approx(1, abs=1e-12)
    assert np.allclose(prof.cosine_coeffs, 0, atol=1e-12)


def test_validate_examples():
    ok = validate(ModelConfig(mu1=0.1, mu2=0.0))
    assert ok.ok
    bad = validate(ModelConfig.from_rates(1, 2, 2, 1))
    assert not bad.ok
    chk = bad["P1 saddle1 dissipative"]
    assert not chk.passed and chk.witness == -1
    nz = validate(ModelConfig(mu1=0.0, mu2=0.1, phi2=ForcingProfile((), (1.0,), 2.0)))
    assert not nz["P7b phi2 sign-changing"].passed


def test_validate_is_pure():
    cfg = ModelConfig(mu1=0.2, mu2=0.05)
    before = cfg.to_json()
    r1, r2 = validate(cfg), validate(cfg)
    assert r1.to_dict() == r2.to_dict()
    assert cfg.to_json() == before


def test_saddle_rejects_nonpositive():
    with pytest.raises(ValueError):
        SaddleData(-1, 1)


def test_mu_norm_is_max():
    assert ModelConfig(mu1=0.01, mu2=0.3).mu_norm == 0.3


@settings(max_examples=30)
@given(dissipative(), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 50), coeffs, coeffs)
def test_config_roundtrip(r, mu1, mu2, omega, a, b):
    cfg = ModelConfig.from_rates(*r, mu1=mu1, mu2=mu2, omega=omega, phi2=ForcingProfile(a, b, 0.1))
    assert ModelConfig.from_json(cfg.to_json()) == cfg
    assert ModelConfig.from_kv(parse_kv(format_kv(cfg.to_kv()))) == cfg


def test_config_files(tmp_path):
    cfg = ModelConfig(mu1=0.02, omega=3.0)
    for name in ("c.cfg", "c.json"):
        write_config(cfg, tmp_path / name)
        assert read_config(tmp_path / name) == cfg
    (tmp_path / "x.cfg").write_text("# comment\nc1 = 3   # trailing\nphi1.sin = [0.5]\n")
    got = read_config(tmp_path / "x.cfg")
    assert got.saddle1.c == 3 and got.phi1.sine_coeffs == (0.5,)


@pytest.mark.parametrize("text", ["c1 3\n", "c1 = [1, \n", "c1 = 1\nc1 = 2\n", "c1 = abc\n", "c1 =\n"])
def test_parse_errors(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        read_config(p)
