import math
import warnings
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from ineqlab import sobolev as sb
from ineqlab.errors import BadInput, NotConverged, TruncationWarning
from ineqlab.grid import GridFunction, GridSpec, frac_laplacian, lp_norm, pairing
from ineqlab.lp import grad_energy

DESK = GridSpec(1, 80.0, 4096)
# Rayleigh quotient of h at n = 1, alpha = 1/4 on DESK, frozen from this grid.
S_DESK = 1.1655178626427214


@lru_cache(maxsize=None)
def desk_system():
    return sb.SobolevSystem.on_grid(1, 0.25, DESK)


@lru_cache(maxsize=None)
def small_system():
    spec = GridSpec(1, 40.0, 512)
    return spec, sb.SobolevSystem.on_grid(1, 0.25, spec, refine=False)


def quiet_bubble(theta, sys, spec):
    return sb.bubble(theta, sys, spec, warn=False)


def sharp_sobolev_constant(n):
    """Closed form of the sharp constant for alpha = 1."""
    return (math.gamma(n) / math.gamma(n / 2)) ** (2 / n) / (math.pi * n * (n - 2))


def band_limited(rng, spec, kmax, mean_zero=False):
    N = spec.points_per_side
    coeff = np.zeros(N, complex)
    idx = np.r_[0 : kmax + 1, N - kmax : N]
    coeff[idx] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
    if mean_zero:
        coeff[0] = 0
    return GridFunction(spec, np.fft.ifft(coeff) * N)


def test_system_invariants():
    sys = sb.SobolevSystem(3, 1.0, 0.2)
    assert sys.p == 6.0 and sys.p_dual == 1.2
    assert 1 / sys.p + 1 / sys.p_dual == pytest.approx(1.0, abs=1e-15)
    assert sys.ratio == pytest.approx(sys.p_dual - 1)
    for bad in ((1, 0.5, 1.0), (1, 0.0, 1.0), (3, 1.0, -1.0), (3, 1.0, math.inf)):
        with pytest.raises(BadInput):
            sb.SobolevSystem(*bad)


def test_bubble_params_validation():
    with pytest.raises(BadInput):
        sb.BubbleParams(1.0, 0.0, (0.0,))
    with pytest.raises(BadInput):
        sb.BubbleParams(1.0, 1.0, (math.nan,))
    assert sb.BubbleParams(2, 1.0, 0.5).eta0 == (0.5,)


def test_bubble_examples():
    sys = desk_system()
    h = quiet_bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys, DESK)
    x = DESK.coords()[0]
    assert h.values[x == 0.0][0] == 1.0
    assert np.allclose(h.values, (1 + x * x) ** -0.25, rtol=1e-15, atol=0)
    z = quiet_bubble(sb.BubbleParams(0.0, 1.0, (0.0,)), sys, DESK)
    assert np.all(z.values == 0)


def test_bubble_matches_scalar_closed_form():
    sys = desk_system()
    b = quiet_bubble(sb.BubbleParams(2.0, 3.0, (1.0,)), sys, DESK)
    x = DESK.axis()
    # Away from the seam of the periodic box the wrapped centre is the true one.
    for i in range(0, DESK.points_per_side, 97):
        if abs(x[i] - 1.0) <= DESK.half_width:
            exact = 2.0 * (1.0 + (3.0 * (x[i] - 1.0)) ** 2) ** -0.25
            assert abs(b.values[i] - exact) <= 1e-14 * abs(exact)


def test_bubble_truncation_warning():
    sys = desk_system()
    with pytest.warns(TruncationWarning):
        sb.bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys, DESK)
    sys3 = sb.SobolevSystem(1, 0.05, 1.0)
    spec = GridSpec(1, 1e7, 64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sb.bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys3, spec)
    with pytest.raises(BadInput):
        sb.bubble(sb.BubbleParams(1.0, 1.0, (0.0, 0.0)), sys3, spec)


def test_sobolev_constant_desk_value_and_refinement():
    S = sb.sobolev_constant(1, 0.25, DESK)
    assert S == pytest.approx(S_DESK, rel=1e-12)
    S2 = sb.sobolev_constant(1, 0.25, DESK.refined(2), refine=False)
    assert abs(S2 - S) <= 1e-3 * S


def test_sobolev_constant_not_converged():
    with pytest.raises(NotConverged):
        sb.sobolev_constant(1, 0.25, GridSpec(1, 80.0, 16), rtol=1e-9)
    with pytest.raises(BadInput):
        sb.sobolev_constant(3, 1.0, DESK)


def test_radial_constant_against_adaptive_quadrature():
    n = 3
    h = lambda r: (1 + r * r) ** -0.5
    hr = lambda r: -r * (1 + r * r) ** -1.5
    power = integrate.quad(lambda r: h(r) ** 6 * r * r, 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    grad = integrate.quad(lambda r: hr(r) ** 2 * r * r, 0, np.inf, epsabs=0, epsrel=1e-13)[0]
    omega = 4 * math.pi
    oracle = (omega * power) ** (1 / 3) / (omega * grad)
    assert oracle == pytest.approx(sharp_sobolev_constant(3), rel=1e-10)
    assert sb.radial_sobolev_constant(n, 80.0, 2048) == pytest.approx(oracle, rel=5e-3)
    assert sb.radial_sobolev_constant_extrapolated(n, 80.0, 4096) == pytest.approx(
        oracle, rel=1e-6
    )


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_quotient_scale_invariance(a):
    R = 80.0
    r = np.linspace(0, R, 32768)

    def quotient(s):
        q = lambda x: (1 + (s * x) ** 2) ** -0.5
        dq = lambda x: -s * s * x * (1 + (s * x) ** 2) ** -1.5
        tail = sb.RadialTail.from_profile(q, dq, R, 3)
        return sb.radial_rayleigh_quotient(r, q(r), 3, tail)

    assert quotient(a) == pytest.approx(quotient(1.0), rel=1e-6)


def test_sobolev_deficit_examples():
    sys = desk_system()
    assert sb.sobolev_deficit(GridFunction.zeros(DESK), sys) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(5):
        theta = sb.BubbleParams(complex(*rng.normal(size=2)), 1.0, (rng.uniform(-80, 80),))
        b = quiet_bubble(theta, sys, DESK)
        assert abs(sb.sobolev_deficit(b, sys)) <= 1e-3 * sb.energy_F(b, sys)


def _perturbed(spec, sys, eps=0.1):
    x = spec.coords()[0]
    h = quiet_bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys, spec)
    w = np.exp(-((x - 3) ** 2)) * np.cos(2 * x)
    # Fixed continuum amplitude so both resolutions sample the same function.
    return h + eps * 7.5 * w


def test_sobolev_deficit_perturbation_against_double_resolution():
    sys = desk_system()
    fine = DESK.refined(2)
    sys2 = sb.SobolevSystem.on_grid(1, 0.25, fine, refine=False)
    d1 = sb.sobolev_deficit(_perturbed(DESK, sys), sys)
    d2 = sb.sobolev_deficit(_perturbed(fine, sys2), sys2)
    assert d1 > 0
    assert d1 == pytest.approx(d2, rel=1e-2)


def test_hls_deficit_examples():
    sys = desk_system()
    assert sb.hls_deficit(GridFunction.zeros(DESK), sys) == 0.0
    rng = np.random.default_rng(1)
    for _ in range(5):
        theta = sb.BubbleParams(complex(*rng.normal(size=2)), 1.0, (rng.uniform(-80, 80),))
        g = grad_energy(quiet_bubble(theta, sys, DESK), sys.p)
        assert abs(sb.hls_deficit(g, sys)) <= 1e-3 * sys.S * sb.energy_E_star(g, sys)


def test_dual_bubble_is_gradient_image():
    sys = desk_system()
    theta = sb.BubbleParams(1.5, 1.0, (2.0,))
    g = grad_energy(quiet_bubble(theta, sys, DESK), sys.p)
    d = sb.dual_bubble(sb.BubbleParams(1.0, 1.0, (2.0,)), sys, DESK)
    ratio = g.values / d.values
    assert np.allclose(ratio, ratio[0], rtol=1e-12)


def test_riesz_form_against_spectral_form():
    sys = desk_system()
    spec = DESK
    x = spec.coords()[0]
    gauss = GridFunction(spec, np.exp(-x * x))
    C = sb.quadratic_form(gauss, -sys.alpha) / sb.riesz_form(gauss, sys.alpha)
    assert np.isfinite(C) and C > 0
    window = np.exp(-((x / 10.0) ** 2))
    rng = np.random.default_rng(2)
    for _ in range(5):
        k = int(rng.integers(4, 40))
        freqs = rng.uniform(0.05, 0.5, k) * rng.choice([-1.0, 1.0], k)
        amps = rng.normal(size=k) + 1j * rng.normal(size=k)
        g = (np.exp(1j * np.multiply.outer(x, freqs)) @ amps) * window
        g = g - np.sum(g) / np.sum(window) * window
        gf = GridFunction(spec, g)
        ratio = sb.quadratic_form(gf, -sys.alpha) / (C * sb.riesz_form(gf, sys.alpha))
        assert abs(ratio - 1) <= 1e-2


def test_riesz_zeta_diagonal_on_scalar_sum():
    # sum_{j != 0} |j h|^s h + w_0 approximates int_{-A}^{A} |x|^s dx for the
    # smooth integrand 1 when the corrections at the end points are added.
    s, h, A = -0.5, 0.01, 1.0
    j = np.arange(1, int(A / h))
    lattice = 2 * h * np.sum((j * h) ** s) + h * (A ** s)
    diag = -2 * special.zeta(-s) * h ** (1 + s)
    exact = 2 * A ** (1 + s) / (1 + s)
    assert abs(lattice + diag - exact) <= 1e-3 * exact
    assert abs(lattice - exact) > 10 * abs(lattice + diag - exact)


def test_fit_recovers_member_of_manifold():
    spec, sys = small_system()
    theta = sb.BubbleParams(1.3 - 0.4j, 1.7, (5.25,))
    f = quiet_bubble(theta, sys, spec)
    fit = sb.dist_to_bubbles(f, sys, sb.NormChoice.GRAD)
    assert fit.converged
    assert fit.distance <= 1e-6 * sb.grad_norm(f, sys.alpha)
    assert fit.params.a == pytest.approx(1.7, rel=1e-4)
    assert fit.params.eta0[0] == pytest.approx(5.25, abs=spec.spacing)
    assert fit.params.z == pytest.approx(theta.z, rel=1e-4)


@pytest.mark.parametrize("norm", [sb.NormChoice.LP, sb.NormChoice.DUAL_LP])
def test_fit_recovers_in_lp_norms(norm):
    spec, sys = small_system()
    theta = sb.BubbleParams(0.8, 1.0, (-3.0,))
    f = quiet_bubble(theta, sys, spec) if norm is sb.NormChoice.LP else \
        sb.dual_bubble(theta, sys, spec)
    fit = sb.dist_to_bubbles(f, sys, norm)
    q = sys.p if norm is sb.NormChoice.LP else sys.p_dual
    assert fit.distance <= 1e-5 * lp_norm(f, q)


def test_fit_perturbation_is_bounded_by_candidate():
    spec, sys = small_system()
    rng = np.random.default_rng(3)
    theta = sb.BubbleParams(1.0, 1.0, (0.0,))
    b = quiet_bubble(theta, sys, spec)
    w = band_limited(rng, spec, 40, mean_zero=True)
    eps = 0.05 * sb.grad_norm(b, sys.alpha) / sb.grad_norm(w, sys.alpha)
    fit = sb.dist_to_bubbles(b + eps * w, sys)
    assert fit.distance <= eps * sb.grad_norm(w, sys.alpha) + 1e-6


def test_fit_two_separated_bubbles():
    spec, sys = small_system()
    L = spec.half_width
    t1 = sb.BubbleParams(1.0, 4.0, (-L / 2,))
    t2 = sb.BubbleParams(1.0, 4.0, (L / 2,))
    b1, b2 = quiet_bubble(t1, sys, spec), quiet_bubble(t2, sys, spec)
    f = b1 + b2
    fit = sb.dist_to_bubbles(f, sys)
    smaller = min(sb.grad_norm(b1, sys.alpha), sb.grad_norm(b2, sys.alpha))
    # The slowly decaying tails overlap, so only a coarse lower bound holds.
    assert fit.distance >= 0.5 * smaller
    dense = sb.dist_to_bubbles(f, sys, scales_per_decade=90, centers_per_axis=640)
    assert fit.distance <= dense.distance * (1 + 1e-6)


def test_transfer_on_dual_optimizer():
    sys = desk_system()
    g = grad_energy(quiet_bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys, DESK), sys.p)
    rep = sb.transfer_inequality_check(g, sys)
    scale = rep.E_star
    assert abs(rep.lhs) <= 1e-3 * scale
    assert abs(rep.F_of_f - rep.E_of_f) <= 1e-3 * scale
    assert rep.remainder <= 1e-3 * scale
    assert abs(rep.young_residual) <= 1e-8


def test_transfer_random_band_limited():
    sys = desk_system()
    rng = np.random.default_rng(4)
    for i in range(40):
        g = band_limited(rng, DESK, int(rng.integers(1, 200)))
        if i % 2:
            g = grad_energy(g, sys.p)
        rep = sb.transfer_inequality_check(g, sys)
        assert rep.passed, rep
        assert abs(rep.young_residual) <= 1e-8


def test_transfer_far_from_bubbles_has_positive_slack():
    sys = desk_system()
    rng = np.random.default_rng(5)
    f0 = band_limited(rng, DESK, 300)
    rep = sb.transfer_inequality_check(grad_energy(f0, sys.p), sys)
    assert rep.slack > 0.01 * rep.E_star


def test_deficit_duality_ordering_along_grad_F():
    sys = desk_system()
    rng = np.random.default_rng(6)
    for _ in range(20):
        x = band_limited(rng, DESK, int(rng.integers(1, 200)))
        y = sys.S * frac_laplacian(x, 2 * sys.alpha)
        primal = sb.energy_F(x, sys) - sb.energy_E(x, sys)
        dual = sb.energy_E_star(y, sys) - sb.energy_F_star(y, sys)
        assert dual >= primal - 1e-9 * sb.energy_E_star(y, sys)
        # F and F* are an exact discrete Legendre pair.
        young = sb.energy_F(x, sys) + sb.energy_F_star(y, sys)
        assert pairing(x, y) == pytest.approx(young, rel=1e-8)


def test_kappa_star_examples():
    sys = desk_system()
    c = sys.ratio
    assert c == pytest.approx(1 / 3)
    assert sb.kappa_star(1e30, sys) == 0.5 * c
    clamp = sys.S / c
    assert sb.kappa_star(clamp, sys) == pytest.approx(0.5 * c, abs=1e-15)
    assert abs(sb.kappa_star(clamp * (1 - 1e-15), sys) - 0.5 * c) <= 1e-14
    k = 1e-4
    assert sb.kappa_star(k, sys) == pytest.approx(0.5 * c * c * k / sys.S, rel=1e-15)
    with pytest.raises(BadInput):
        sb.kappa_star(0.0, sys)


@settings(max_examples=100, deadline=None)
@given(k1=st.floats(1e-8, 1e8), k2=st.floats(1e-8, 1e8))
def test_kappa_star_monotone_and_pure(k1, k2):
    sys = sb.SobolevSystem(1, 0.25, S_DESK)
    lo, hi = sorted((k1, k2))
    assert sb.kappa_star(lo, sys) <= sb.kappa_star(hi, sys)
    assert sb.kappa_star(k1, sys) == sb.kappa_star(k1, sys)


def test_stability_constants_derive():
    sys = sb.SobolevSystem(3, 1.0, sharp_sobolev_constant(3))
    sc = sb.StabilityConstants.derive(0.1, 0.5, 0.25, sys)
    assert sc.kappa_BE_star == sb.kappa_star(0.1, sys)
    c = 1 / 5
    assert sc.local_hls == pytest.approx(0.5 * c * min(4 * 0.25 * c / sys.S, 1))


def test_local_stability_on_bubbles_is_zero():
    sys = desk_system()
    b = quiet_bubble(sb.BubbleParams(1.0, 1.0, (0.0,)), sys, DESK)
    assert abs(sb.sobolev_deficit(b, sys)) <= 1e-8 * sb.energy_F(b, sys)
    g = grad_energy(b, sys.p)
    assert abs(sb.hls_deficit(g, sys)) <= 1e-3 * sys.S * sb.energy_E_star(g, sys)


def test_local_stability_suite_small_perturbations():
    spec, sys = small_system()
    rng = np.random.default_rng(7)
    rep = sb.local_stability_suite(sys, spec, r=0.5, lam=0.05, samples=4, rng=rng,
                                   eps_range=(0.05, 0.1))
    assert rep.constant == sb.local_hls_constant(0.05, sys)
    assert len(rep.samples) + rep.excluded_primal + rep.excluded_dual_young \
        + rep.excluded_dual_radius == 4
    assert rep.extrapolated
    for s in rep.samples:
        assert s.deficit >= 0
        assert s.margin == s.deficit - s.bound


def test_local_stability_suite_excludes_far_samples():
    spec, sys = small_system()
    rng = np.random.default_rng(8)
    rep = sb.local_stability_suite(sys, spec, r=0.5, lam=0.25, samples=2, rng=rng,
                                   eps_range=(50.0, 100.0))
    assert rep.samples == ()
    assert rep.excluded_primal == 1
    assert rep.excluded_dual_young + rep.excluded_dual_radius == 1
    assert rep.passed and rep.min_margin == math.inf


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.integers(0, 2))
def test_deficits_nonnegative_within_floor(seed, kind):
    sys = desk_system()
    rng = np.random.default_rng(seed)
    # Floor measured on bubbles over the scales used below, tripled.
    budget = 3 * 8.6e-3
    if kind == 0:
        f = band_limited(rng, DESK, int(rng.integers(1, 500)))
    elif kind == 1:
        a = float(np.exp(rng.uniform(np.log(10**-0.5), np.log(10**0.5))))
        f = quiet_bubble(sb.BubbleParams(1.0, a, (rng.uniform(-80, 80),)), sys, DESK)
        f = f + rng.uniform(0, 0.3) * GridFunction(DESK, rng.normal(size=4096))
    else:
        f = GridFunction(DESK, rng.normal(size=4096) + 1j * rng.normal(size=4096))
    assert sb.sobolev_deficit(f, sys) >= -budget * sb.energy_F(f, sys)
    g = grad_energy(f, sys.p) if kind == 1 else f
    assert sb.hls_deficit(g, sys) >= -budget * sys.S * sb.energy_E_star(g, sys)
