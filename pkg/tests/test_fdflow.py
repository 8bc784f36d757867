import csv
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ineqlab import fdflow as fd
from ineqlab.errors import BadInput, MonotonicityViolation, StabilityViolation

# Sharp Sobolev constant in three dimensions.
S3 = (1 / (3 * math.pi)) * (4 / math.sqrt(math.pi)) ** (2 / 3)
SMALL = fd.FlowConfig(R_max=20.0, M_points=256, t_end=0.5, samples=10)


@lru_cache(maxsize=None)
def target(M=1.0):
    return fd.BarenblattParams(M)


@lru_cache(maxsize=None)
def small_run():
    start = fd.default_corpus(SMALL)["compressed"]
    return start, fd.run_flow(start, SMALL, S3)


def test_flow_config_defaults_and_validation():
    cfg = fd.FlowConfig()
    assert cfg.m == pytest.approx(2 / 3)
    assert cfg.beta == pytest.approx(1.0)
    assert cfg.substeps * cfg.time_step == pytest.approx(cfg.sample_interval, rel=1e-14)
    assert cfg.time_step <= cfg.cfl * cfg.dr / cfg.R_max * (1 + 1e-12)
    assert cfg.halved().time_step == pytest.approx(cfg.time_step / 2)
    for kw in ({"n": 2}, {"m": 0.2}, {"m": 1.0}, {"mass": 0.0}, {"M_points": 4}):
        with pytest.raises(BadInput):
            fd.FlowConfig(**kw)


def test_barenblatt_exponent_and_mass():
    p = target()
    assert p.exponent == pytest.approx(-3.0, rel=1e-14)
    assert fd.whole_space_mass(p.D, 3, p.m) == pytest.approx(1.0, rel=1e-3)
    # Far field decays like r^(2 exponent).
    r = np.array([1e4, 2e4])
    vals = p(r)
    assert math.log(vals[1] / vals[0]) / math.log(2) == pytest.approx(-6.0, rel=1e-6)


def test_barenblatt_D_decreases_with_mass():
    Ds = [fd.BarenblattParams(M).D for M in (0.25, 0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(Ds, Ds[1:]))
    with pytest.raises(BadInput):
        fd.barenblatt_D(-1.0)


def test_barenblatt_mass_against_shell_quadrature():
    p = target()
    c, e = p.c, p.exponent
    # Independent form: substitute r = sqrt(D/c) tan(t) on [0, pi/2).
    k = math.sqrt(p.D / c)
    integrand = lambda t: (p.D / math.cos(t) ** 2) ** e * (k * math.tan(t)) ** 2 * k / math.cos(t) ** 2
    val = integrate.quad(integrand, 0, math.pi / 2, epsrel=1e-12)[0]
    assert 4 * math.pi * val == pytest.approx(1.0, rel=1e-3)


def test_lift_roundtrip_and_zero():
    rng = np.random.default_rng(0)
    v = rng.uniform(1e-6, 10.0, 1000)
    assert np.max(np.abs(fd.unlift(fd.lift(v, 3), 3) - v) / v) <= 1e-12
    assert fd.lift(np.zeros(4), 3).tolist() == [0.0] * 4
    g = fd.RadialGrid.build(3, 10.0, 64)
    prof = fd.barenblatt(target(), g)
    back = fd.unlift(fd.lift(prof))
    assert np.max(np.abs(back.values - prof.values) / prof.values) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(v=st.floats(1e-12, 1e12), n=st.integers(3, 8))
def test_lift_roundtrip_property(v, n):
    assert fd.unlift(fd.lift(np.array([v]), n), n)[0] == pytest.approx(v, rel=1e-12)


def test_radial_profile_validation():
    g = fd.RadialGrid.build(3, 10.0, 16)
    with pytest.raises(BadInput):
        fd.RadialProfile(g, np.ones(15))
    with pytest.raises(BadInput):
        fd.RadialProfile(g, -np.ones(16))
    with pytest.raises(StabilityViolation):
        fd.RadialProfile(g, np.full(16, np.nan))


def test_grid_volumes_sum_to_ball():
    g = fd.RadialGrid.build(3, 7.0, 100)
    assert math.fsum(g.volumes) == pytest.approx(4 / 3 * math.pi * 7.0**3, rel=1e-13)


def test_steady_state_step():
    g = fd.RadialGrid.for_config(SMALL)
    b = fd.barenblatt(target(), g)
    s = fd.step(b, SMALL)
    assert np.max(np.abs(s.values - b.values) / b.values) <= 1e-6
    assert abs(s.mass() - b.mass()) <= 1e-12 * b.mass()


def test_mass_conserved_per_step():
    start = fd.default_corpus(SMALL)["bump"]
    v = start
    for _ in range(20):
        nxt = fd.step(v, SMALL)
        assert abs(nxt.mass() - v.mass()) <= 1e-12 * v.mass()
        v = nxt


def test_radial_deficit_of_lifted_barenblatt():
    cfg = fd.FlowConfig()
    g = fd.RadialGrid.for_config(cfg)
    p = target()
    f = fd.lift(fd.barenblatt(p, g))
    d = fd.radial_sobolev_deficit(f, 3, S3, tail=fd.lifted_tail(p, g.R_max))
    assert abs(d) <= 1e-3
    assert fd.radial_sobolev_deficit(np.zeros(g.M), 3, S3, g.r) == 0.0


def test_radial_deficit_against_adaptive_quadrature():
    cfg = fd.FlowConfig()
    g = fd.RadialGrid.for_config(cfg)
    p = target()
    bump = lambda r: 1 + 0.3 * np.exp(-r * r)
    q = lambda r: p(r) ** (1 / 6) * bump(r)
    # Product rule, written out independently of the library.
    dq = lambda r: (
        (1 / 6) * p(r) ** (1 / 6 - 1) * (-3) * (p.D + p.c * r * r) ** -4 * 2 * p.c * r * bump(r)
        + p(r) ** (1 / 6) * 0.3 * np.exp(-r * r) * (-2 * r)
    )
    R = g.R_max
    grad = integrate.quad(lambda r: dq(r) ** 2 * r * r, 0, R, limit=400, epsrel=1e-12)[0]
    power = integrate.quad(lambda r: q(r) ** 6 * r * r, 0, R, limit=400, epsrel=1e-12)[0]
    w = 4 * math.pi
    oracle = S3 * w * grad - (w * power) ** (1 / 3)
    got = fd.radial_sobolev_deficit(q(g.r), 3, S3, g.r)
    assert got == pytest.approx(oracle, rel=2e-2)


def test_graft_matches_target_mass():
    g = fd.RadialGrid.for_config(SMALL)
    corpus = fd.default_corpus(SMALL)
    ref = fd.barenblatt(target(), g).mass()
    assert set(corpus) == {"barenblatt", "compressed", "spread", "bump", "mixture"}
    for prof in corpus.values():
        assert prof.mass() == pytest.approx(ref, rel=1e-12)
    with pytest.raises(BadInput):
        fd.graft(-np.ones(g.M), target(), g)


def test_short_flow_decreases_deficit_and_distance():
    start, tr = small_run()
    assert tr.t.size == SMALL.samples + 1
    assert tr.mass_drift() <= 1e-12
    assert np.all(np.diff(tr.l1_dist) < 0)
    assert tr.max_increase() < 0
    tr.check_monotone(0.0)
    assert tr.deficit[-1] < 0.01 * tr.deficit[0]
    lo, hi = tr.sandwich
    assert 0 < lo <= 1 <= hi
    assert tr.final.mass() == pytest.approx(start.mass(), rel=1e-12)


def test_flow_time_step_refinement():
    start, tr = small_run()
    fine = fd.run_flow(start, SMALL.halved(), S3)
    assert np.allclose(fine.deficit, tr.deficit, rtol=1e-2, atol=1e-8)


def test_monotonicity_violation():
    start, tr = small_run()
    bad = fd.Trajectory(
        tr.t, tr.mass, tr.deficit[::-1].copy(), tr.l1_dist, tr.min_v, tr.clipped_mass,
        tr.final, tr.sandwich,
    )
    with pytest.raises(MonotonicityViolation):
        bad.check_monotone(1e-6)


def test_unstable_step_is_reported():
    g = fd.RadialGrid.for_config(SMALL)
    v = fd.RadialProfile(g, np.where(g.r < 5, 1.0, 0.0))
    with pytest.raises(StabilityViolation):
        fd.step(v, SMALL)


def test_trajectory_csv(tmp_path):
    _, tr = small_run()
    path = tmp_path / "traj.csv"
    fd.write_trajectory_csv(tr, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "mass", "deficit", "l1_dist_to_barenblatt", "min_v", "clipped_mass"]
    assert len(rows) == tr.t.size + 1
    assert float(rows[-1][2]) == tr.deficit[-1]
