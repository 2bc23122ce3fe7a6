import csv
import math

import numpy as np
import pytest

from conftest import A_STAR
from hetlab.combinatorics import find_superstable_sinks
from hetlab.errors import NotAGraph, UnreliableEstimate
from hetlab.maps import ReturnMap
from hetlab.model import ForcingProfile, ModelConfig, derive_constants
from hetlab.singular import mu_lattice
from hetlab.sweep import (LABELS, SweepResult, a_scan, bifurcation_diagram, classify_cell, classify_cells,
                          detect_period, invariant_curve_extract, lyapunov_2d, tangle_fraction, tangle_side,
                          winding_number)
from hetlab.tangle import tangle_side_fraction

TWO_PI = 2 * math.pi
FAST = dict(seeds=2, burn_in=500, n=3000)


@pytest.fixture(scope="module")
def chaos_cfg():
    cfg = ModelConfig(omega=10.0)
    k = derive_constants(cfg)
    n = math.ceil(-cfg.omega * k.K_F * math.log(1e-3) / TWO_PI)
    return cfg.replace(mu1=mu_lattice(cfg, k, A_STAR, n))


@pytest.fixture(scope="module")
def sink():
    cfg = ModelConfig(omega=10.0)
    return cfg, find_superstable_sinks(cfg, None, A_STAR, search_radius=0.5, period_cap=4)[0]


def test_lyapunov_in_the_smooth_curve_regime(circle_cfg):
    lam1, lam2 = lyapunov_2d(ReturnMap(circle_cfg.replace(mu1=1e-3), "F"), n=5000)
    assert abs(lam1) < 0.02 and lam2 < 0 and lam1 + lam2 < 0


def test_lyapunov_at_a_superstable_sink(sink):
    cfg, h = sink
    lam1, lam2 = lyapunov_2d(ReturnMap(cfg.replace(mu1=h.mu), "F"), (0.5, h.critical_point), 500, 3000)
    assert lam1 < -1 and lam2 <= lam1


def test_lyapunov_rejects_mostly_skipped_orbits():
    cfg = ModelConfig(phi1=ForcingProfile((), (1.0,)), mu1=0.1)
    with np.errstate(all="ignore"), pytest.raises(UnreliableEstimate):
        lyapunov_2d(ReturnMap(cfg, "F"), burn_in=100, n=1000)


def test_labels(circle_cfg, chaos_cfg, sink):
    assert classify_cell(circle_cfg.replace(mu1=1e-3), **FAST).label == "invariant-curve"
    c = classify_cell(chaos_cfg, **FAST)
    assert c.label == "chaotic" and c.lyapunov_max > 0.02
    cfg, h = sink
    s = classify_cell(cfg.replace(mu1=h.mu), **FAST)
    assert s.label == "periodic-sink" and s.lyapunov_max < -0.05 and s.period >= 1
    assert set(LABELS) == {"invariant-curve", "periodic-sink", "chaotic", "singular-dominated", "undetermined"}


def test_period_and_winding_helpers():
    t = np.arange(300) * 2.0 * TWO_PI / 5
    y = np.tile([0.1, 0.2, 0.3, 0.4, 0.5], 60)
    assert detect_period(y, t) == 5
    assert detect_period(np.random.default_rng(1).random(300), np.zeros(300)) is None
    assert winding_number(np.arange(1000) * 0.5 * (math.sqrt(5) - 1) * TWO_PI) == 1
    assert winding_number(np.linspace(0, 1, 100)) == 0


def test_invariant_curve_extraction(circle_cfg):
    a = invariant_curve_extract(circle_cfg.replace(mu1=1e-3), n=5000)
    b = invariant_curve_extract(circle_cfg.replace(mu1=2e-3), n=5000)
    assert a.winding == 1 and a.residual < 1e-3 and b.residual < 1e-3
    t = np.linspace(0, TWO_PI, 32)
    assert np.all(a.profile.evaluate(t) > 0)
    # the curve height scales like mu**delta with delta = 3
    assert b.y_sup / a.y_sup == pytest.approx(8.0, rel=0.02)


def test_chaotic_orbit_is_not_a_graph(chaos_cfg):
    with pytest.raises(NotAGraph):
        invariant_curve_extract(chaos_cfg, n=3000)


def test_classification_is_deterministic_and_batch_independent(chaos_cfg, sink):
    cfg, h = sink
    mus = [h.mu, chaos_cfg.mu1]
    batch = classify_cells(cfg, "F", mus, [0.0, 0.0], cell_ids=[0, 1], **FAST)
    again = classify_cells(cfg, "F", mus, [0.0, 0.0], cell_ids=[0, 1], **FAST)
    single = classify_cells(cfg, "F", mus[1:], [0.0], cell_ids=[1], **FAST)
    assert [c.to_dict() for c in batch] == [c.to_dict() for c in again]
    assert batch[1].to_dict() == single[0].to_dict()


def test_rotating_the_profile_keeps_the_class(circle_cfg):
    base = classify_cell(circle_cfg.replace(mu1=1e-3), **FAST)
    rot = classify_cell(circle_cfg.replace(mu1=1e-3, phi1=circle_cfg.phi1.shifted(1.0)), **FAST)
    assert rot.label == base.label and abs(rot.lyapunov_max - base.lyapunov_max) < 0.02
    assert rot.lyapunov_2 == pytest.approx(base.lyapunov_2, abs=0.05)


def test_axes_use_the_matching_return_map():
    cfg = ModelConfig.from_rates(2, 1, 2, 1, omega=0.05, mu2=0.0)
    res = bifurcation_diagram(cfg, (0.0, 0.01), (0.0, 0.01), (3, 3), seeds=1, burn_in=10, n=50)
    which = np.array([c.which for c in res.cells]).reshape(3, 3)
    assert which[0, 0] == "" and res.cells[0].cls.label == "undetermined"
    assert list(which[0, 1:]) == ["F", "F"] and list(which[1:, 0]) == ["G", "G"]
    m1 = np.array([c.mu1 for c in res.cells]).reshape(3, 3)
    m2 = np.array([c.mu2 for c in res.cells]).reshape(3, 3)
    inner = which[1:, 1:] == np.where(tangle_side(m1[1:, 1:], m2[1:, 1:], res.hom), "G", "F")
    assert inner.all() and res.hom[1] == pytest.approx(2.0, abs=0.05)


def test_single_cell_grid_and_outputs(tmp_path, circle_cfg):
    res = bifurcation_diagram(circle_cfg, (1e-3, 1e-3), (0.0, 0.0), (1, 1), **FAST)
    assert len(res.cells) == 1 and res.cells[0].which == "F"
    assert res.labels().shape == (1, 1) and sum(res.counts().values()) == 1
    res.write_csv(tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SweepResult.HEADER and len(rows) == 2
    assert rows[1][4] == "invariant-curve"
    res.write_dat(tmp_path / "s.dat")
    assert (tmp_path / "s.dat").read_text().startswith("# mu1 mu2 label_index lyap1\n")
    res.write_svg(tmp_path / "s.svg")
    assert (tmp_path / "s.svg").read_text().count("<rect") == 1 + len(LABELS)


def test_threads_do_not_change_results():
    cfg = ModelConfig(omega=10.0)
    kw = dict(seeds=2, burn_in=100, n=500, seed=3)
    one = bifurcation_diagram(cfg, (1e-4, 1e-3), (0.0, 0.0), (6, 1), threads=1, **kw)
    many = bifurcation_diagram(cfg, (1e-4, 1e-3), (0.0, 0.0), (6, 1), threads=3, **kw)
    assert [c.row() for c in one.cells] == [c.row() for c in many.cells]


def test_a_scan_places_cells_on_the_lattice(circle_cfg):
    a = np.linspace(0, TWO_PI, 4, endpoint=False)
    res = a_scan(circle_cfg, a, **FAST)
    k = derive_constants(circle_cfg)
    L = circle_cfg.omega * k.K_F
    for c, ai in zip(res.cells, a):
        phase = (-L * math.log(c.mu1)) % TWO_PI
        assert min(abs(phase - ai), TWO_PI - abs(phase - ai)) < 1e-9 and c.mu1 <= 1e-3
        # phase-locked windows give weak sinks, never chaos, in the diffeomorphism regime
        assert c.cls.label != "chaotic" and c.cls.lyapunov_max <= 0.02
    assert "invariant-curve" in [c.cls.label for c in res.cells]


def test_tangle_fraction_matches_geometry():
    for r in (0.1, 0.01):
        assert tangle_fraction((0.98, 2.0), r) == tangle_side_fraction(0.98, 2.0, r)
    assert tangle_side(0.1, 0.02, (1.0, 2.0)) and not tangle_side(0.1, 0.005, (1.0, 2.0))
    assert not tangle_side(0.1, 0.5, None)
