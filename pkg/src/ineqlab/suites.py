"""Verification suites: named collections of checks that produce reports.

Every check draws its random numbers from a generator seeded by the run
seed and a hash of the check id, so results do not depend on which other
checks run or in what order. Checks that share expensive inputs (the
Sobolev constant, the bubble deficit floor, the flow corpus) obtain them
from a :class:`Context` that computes each input once.
"""

from __future__ import annotations

import math
import os
import time
import traceback
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from . import duality as du
from . import fdflow as fd
from . import lp
from . import sobolev as sb
from .config import Config
from .errors import TruncationWarning, UnknownSuite
from .grid import GridFunction, GridSpec, lp_norm
from .report import DeficitReport, inputs_digest

__all__ = [
    "SUITES",
    "Check",
    "Outcome",
    "Context",
    "checks_for",
    "run_suite",
    "describe",
]

# Range of bubble scales used by the random samples of the Sobolev/HLS checks.
SAMPLE_SCALES = (10.0**-0.5, 10.0**0.5)

SUITES = ("duality", "lp", "sobolev", "hls", "transfer", "local", "flow", "all")


@dataclass(frozen=True)
class Outcome:
    """Raw result of a check before it is wrapped in a report."""

    measured: dict
    bound: float
    margin: float
    budget: float
    label: str = ""


@dataclass(frozen=True)
class Check:
    """A named check with the text shown by :func:`describe`."""

    suite: str
    name: str
    statement: str
    inputs: str
    tolerance: str
    keys: tuple[str, ...]
    fn: Callable[["Context", np.random.Generator], Iterator[Outcome]]

    @property
    def id(self) -> str:
        return f"{self.suite}.{self.name}"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("INEQLAB_THREADS", "1")))
    except ValueError:
        return 1


class Context:
    """Configuration, seed and lazily computed shared inputs of a run."""

    def __init__(self, cfg: Config, seed: int):
        self.cfg = cfg
        self.seed = int(seed)

    def rng(self, key: str) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, zlib.crc32(key.encode())])
        return np.random.default_rng(ss)

    @cached_property
    def spec(self) -> GridSpec:
        c = self.cfg
        return GridSpec(c.n, c.L, c.N)

    @cached_property
    def computed_S(self) -> float:
        return sb.sobolev_constant(self.cfg.n, self.cfg.alpha, self.spec, refine=False)

    @cached_property
    def system(self) -> sb.SobolevSystem:
        S = self.cfg.S_override if self.cfg.S_override > 0 else self.computed_S
        return sb.SobolevSystem(self.cfg.n, self.cfg.alpha, S)

    @cached_property
    def bubble_params(self) -> list[sb.BubbleParams]:
        """Random points of the optimizer manifold at unit scale."""
        rng = self.rng("shared.bubbles")
        L, n = self.cfg.L, self.cfg.n
        out = []
        for _ in range(self.cfg.bubbles):
            z = complex(rng.normal(), rng.normal()) * 10.0 ** rng.uniform(-1, 1)
            out.append(sb.BubbleParams(z, 1.0, tuple(rng.uniform(-L, L, n))))
        return out

    def bubble(self, theta: sb.BubbleParams) -> GridFunction:
        return sb.bubble(theta, self.system, self.spec, warn=False)

    @cached_property
    def sobolev_bubble_rel(self) -> np.ndarray:
        sys = self.system
        return np.array(
            [sb.sobolev_deficit(b, sys) / sb.energy_F(b, sys)
             for b in map(self.bubble, self.bubble_params)]
        )

    @cached_property
    def hls_bubble_rel(self) -> np.ndarray:
        sys = self.system
        out = []
        for b in map(self.bubble, self.bubble_params):
            g = lp.grad_energy(b, sys.p)
            out.append(sb.hls_deficit(g, sys) / (sys.S * sb.energy_E_star(g, sys)))
        return np.array(out)

    @cached_property
    def scale_sweep_rel(self) -> dict[str, np.ndarray]:
        """Relative deficits of centred bubbles across the sampled scale range."""
        sys = self.system
        sob, hls = [], []
        for a in np.geomspace(*SAMPLE_SCALES, 11):
            theta = sb.BubbleParams(1.0, float(a), (0.0,) * self.cfg.n)
            b = self.bubble(theta)
            g = lp.grad_energy(b, sys.p)
            sob.append(sb.sobolev_deficit(b, sys) / sb.energy_F(b, sys))
            hls.append(sb.hls_deficit(g, sys) / (sys.S * sb.energy_E_star(g, sys)))
        return {"sobolev": np.array(sob), "hls": np.array(hls)}

    @cached_property
    def bubble_floor(self) -> float:
        """Largest relative deficit magnitude over all bubble evaluations.

        These are the random unit-scale bubbles and the scale sweep, on both
        the Sobolev and the HLS side. The sweep covers every scale that the
        random samples use, so the floor bounds the discretization error of
        the bubble family wherever the samples can approach it.
        """
        sweep = self.scale_sweep_rel
        vals = np.concatenate(
            (self.sobolev_bubble_rel, self.hls_bubble_rel, sweep["sobolev"], sweep["hls"])
        )
        return float(np.max(np.abs(vals)))

    # -- fast diffusion ----------------------------------------------------

    @cached_property
    def flow_config(self) -> fd.FlowConfig:
        c = self.cfg
        return fd.FlowConfig(
            n=c.flow_n, mass=c.flow_mass, R_max=c.flow_R, M_points=c.flow_M,
            t_end=c.flow_t_end, samples=c.flow_samples, cfl=c.flow_cfl,
        )

    @cached_property
    def flow_S(self) -> float:
        return sb.radial_sobolev_constant_extrapolated(self.cfg.flow_n, self.cfg.flow_R)

    @cached_property
    def flow_corpus(self) -> dict[str, fd.RadialProfile]:
        return fd.default_corpus(self.flow_config)

    @cached_property
    def flow_runs(self) -> dict[str, tuple[fd.Trajectory, fd.Trajectory]]:
        """Trajectories of every corpus member at the base and halved time step."""
        cfg = self.flow_config
        jobs = [(name, v0, c) for name, v0 in self.flow_corpus.items()
                for c in (cfg, cfg.halved())]
        run = lambda job: fd.run_flow(job[1], job[2], self.flow_S)
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            trajs = list(pool.map(run, jobs))
        return {
            name: (trajs[2 * i], trajs[2 * i + 1])
            for i, name in enumerate(self.flow_corpus)
        }

    @cached_property
    def flow_budget(self) -> float:
        """Three times the largest deficit magnitude on the steady-state run."""
        control = self.flow_runs["barenblatt"][0]
        return 3.0 * float(np.max(np.abs(control.deficit)))


def _zero(what: str) -> Outcome:
    return Outcome({"warning": f"zero samples for {what}"}, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# duality


def _parabola(k: int) -> du.TabulatedConvexFn:
    x = np.linspace(-2.0, 2.0, k)
    return du.TabulatedConvexFn(x, x * x)


def chk_biconjugate(ctx: Context, rng) -> Iterator[Outcome]:
    f = _parabola(ctx.cfg.duality_knots)
    h = float(f.knots[1] - f.knots[0])
    uniform = np.linspace(-4.0, 4.0, ctx.cfg.duality_knots)
    d_uniform = du.biconjugate_check(f, uniform)
    d_slopes = du.biconjugate_check(f)
    bound = 2.0 * h * h
    yield Outcome(
        {"spacing": h, "dist_uniform_dual_grid": d_uniform, "dist_slope_dual_grid": d_slopes},
        bound, bound - max(d_uniform, d_slopes), 0.0,
    )


def chk_abs_containment(ctx: Context, rng) -> Iterator[Outcome]:
    x = np.linspace(-1.0, 1.0, 201)
    E = du.TabulatedConvexFn(x, np.abs(x))
    F = du.TabulatedConvexFn(x, 2.0 * np.abs(x))
    dE, dF = du.subgradient(E, 0.0), du.subgradient(F, 0.0)
    rep = du.optimizer_duality_check(E, F)
    exact = (dE.lo, dE.hi, dF.lo, dF.hi) == (-1.0, 1.0, -2.0, 2.0)
    strict = dE.is_subset_of(dF) and not dF.is_subset_of(dE)
    ok = exact and strict and rep.passed and list(rep.X0) == [0.0]
    yield Outcome(
        {"dE0": [dE.lo, dE.hi], "dF0": [dF.lo, dF.hi], "X0": rep.X0.tolist(),
         "strict_containment": strict, "optimizer_duality": rep.passed},
        0.0, 0.0 if ok else -1.0, 0.0,
    )


def _convex_family(rng) -> list[du.TabulatedConvexFn]:
    x = np.linspace(-2.0, 2.0, 401)
    slopes = np.sort(rng.normal(size=x.size - 1) * 3.0)
    pw = np.concatenate(([0.0], np.cumsum(slopes * np.diff(x))))
    return [
        du.TabulatedConvexFn(x, x * x),
        du.TabulatedConvexFn(x, np.abs(x)),
        du.TabulatedConvexFn(x, np.exp(x)),
        du.TabulatedConvexFn(x, x**4 / 4.0),
        du.TabulatedConvexFn(x, pw),
    ]


def chk_young(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.young_samples
    if m <= 0:
        yield _zero("Young gaps")
        return
    fam = _convex_family(rng)
    worst, on_graph = math.inf, 0.0
    for i in range(m):
        f = fam[i % len(fam)]
        s = f.slopes()
        x = float(rng.uniform(f.knots[0], f.knots[-1]))
        y = float(rng.uniform(s.min() - 1.0, s.max() + 1.0))
        worst = min(worst, du.young_gap(f, x, y))
        # Equality on the subgradient graph at an interior knot.
        k = int(rng.integers(1, f.knots.size - 1))
        sg = du.subgradient(f, float(f.knots[k]))
        yk = sg.lo + rng.uniform() * (sg.hi - sg.lo)
        on_graph = max(on_graph, abs(du.young_gap(f, float(f.knots[k]), yk)))
    yield Outcome({"min_gap": worst, "max_gap_on_subgradient_graph": on_graph,
                   "samples": m}, 0.0, worst, 1e-12)


def chk_deficit_gaps(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.deficit_samples
    if m <= 0:
        yield _zero("deficit gaps")
        return
    worst1 = worst2 = math.inf
    for i in range(m):
        E = _convex_family(rng)[i % 5]
        x = E.knots
        bump = rng.uniform(0.1, 2.0) * (x - rng.uniform(-1, 1)) ** 2 + rng.uniform(0, 1)
        F = du.TabulatedConvexFn(x, E.values + bump)
        xi = float(x[int(rng.integers(1, x.size - 1))]) if i % 2 else float(
            rng.uniform(x[0], x[-1]))
        for which, G in (("F", F), ("E", E)):
            sg = du.subgradient(G, xi)
            y = sg.lo + rng.uniform() * (sg.hi - sg.lo)
            g1, g2 = du.deficit_duality_gaps(E, F, xi, y)
            if which == "F":
                worst1 = min(worst1, g1)
            else:
                worst2 = min(worst2, g2)
    yield Outcome({"min_gap_y_in_dF": worst1, "min_gap_y_in_dE": worst2, "samples": m},
                  0.0, min(worst1, worst2), 1e-12)


def chk_inf_convolution(ctx: Context, rng) -> Iterator[Outcome]:
    t = np.linspace(0.0, 2.0, 401)
    phi3 = du.RateFn(du.TabulatedConvexFn(t, np.cosh(t) - 1.0))
    cases = {
        "psi=t^2": (du.MonotoneTable(t, t * t), np.where(t <= 0.5, t * t, t - 0.25)),
        "psi=2t": (du.MonotoneTable(t, 2.0 * t), t),
        "psi=(cosh t - 1)/t": (du.psi_from_phi(phi3), None),
    }
    s_grid = np.union1d(t, np.linspace(0.0, 2.0, 20001))
    measured, worst = {}, 0.0
    for label, (psi, exact) in cases.items():
        hat = du.inf_convolution_hat(psi).values
        brute = du.brute_force_inf_convolution(psi, t, s_grid)
        err = float(np.max(np.abs(hat - brute)))
        measured[label] = {"max_abs_vs_brute_force": err}
        if exact is not None:
            measured[label]["max_abs_vs_closed_form"] = float(np.max(np.abs(hat - exact)))
        worst = max(worst, err)
    yield Outcome(measured, 1e-10, 1e-10 - worst, 0.0)


# ---------------------------------------------------------------------------
# L^p geometry


def _lp_spec(ctx: Context) -> GridSpec:
    return GridSpec(1, 1.0, ctx.cfg.lp_N)


def _strong_convexity(ctx: Context, rng, ps) -> Iterator[Outcome]:
    spec = _lp_spec(ctx)
    m = ctx.cfg.lp_pairs
    for p in ps:
        if m <= 0:
            yield _zero(f"p={p}")
            continue
        worst, violations = math.inf, 0
        for i in range(m):
            f1, f2 = lp.random_pair(rng, spec, lp.PAIR_KINDS[i % 5], complex_valued=bool(i % 2))
            w = lp.strong_convexity_gap(f1, f2, p)
            if w.scale == 0:
                continue
            rel = w.margin / w.scale
            violations += rel < -1e-9
            worst = min(worst, rel)
        yield Outcome({"p": p, "pairs": m, "min_relative_margin": worst,
                       "violations": violations}, 0.0, worst, 1e-9, f"p={p}")


def chk_strong_convexity_small(ctx: Context, rng) -> Iterator[Outcome]:
    yield from _strong_convexity(ctx, rng, ctx.cfg.p_small)


def chk_strong_convexity_large(ctx: Context, rng) -> Iterator[Outcome]:
    yield from _strong_convexity(ctx, rng, ctx.cfg.p_large)


def chk_lambda_failure(ctx: Context, rng) -> Iterator[Outcome]:
    spec = _lp_spec(ctx)
    ts = 10.0 ** -np.arange(1, 13)
    for p in ctx.cfg.p_large:
        ratios = [lp.lambda_witness_ratio(spec, p, float(t)) for t in ts]
        best = min(ratios)
        yield Outcome({"p": p, "t": ts.tolist(), "ratio": ratios}, 1e-3, 1e-3 - best, 0.0,
                      f"p={p}")


def chk_gradcon(ctx: Context, rng) -> Iterator[Outcome]:
    spec = _lp_spec(ctx)
    m = ctx.cfg.gradcon_pairs
    R = ctx.cfg.gradcon_R
    for p in ctx.cfg.p_gradcon:
        if m <= 0:
            yield _zero(f"p={p}")
            continue
        pd = lp.ExponentPair(p).p_dual
        worst = 0.0
        recip = 0.0
        for i in range(m):
            g1, g2 = lp.random_pair(rng, spec, lp.PAIR_KINDS[i % 5], complex_valued=bool(i % 2))
            if p > 2:
                g1 = g1 * (rng.uniform(0.01, 0.5) * R / lp_norm(g1, pd))
                g2 = g2 * (rng.uniform(0.01, 0.5) * R / lp_norm(g2, pd))
            if lp_norm(g1 - g2, pd) == 0:
                continue
            worst = max(worst, lp.grad_continuity_ratio(g1, g2, p, R if p > 2 else None))
            if p > 2:
                recip = max(recip, lp.grad_continuity_ratio(g1, g2, p, R, form="reciprocal"))
        measured = {"p": p, "pairs": m, "max_ratio": worst, "R": R if p > 2 else None}
        if p > 2:
            # Reported only: the reciprocal prefactor is violated by simple inputs.
            measured["max_ratio_reciprocal_prefactor"] = recip
        yield Outcome(measured, 1.0, 1.0 - worst, 1e-9, f"p={p}")


def chk_clarkson(ctx: Context, rng) -> Iterator[Outcome]:
    spec = _lp_spec(ctx)
    m = ctx.cfg.gradcon_pairs
    for p in ctx.cfg.p_large:
        if m <= 0:
            yield _zero(f"p={p}")
            continue
        pd = lp.ExponentPair(p).p_dual
        worst = math.inf
        for i in range(m):
            u, v = lp.random_pair(rng, spec, lp.PAIR_KINDS[i % 5], complex_valued=bool(i % 2))
            u = u * (1.0 / lp_norm(u, p))
            v = v * (1.0 / lp_norm(v, pd))
            worst = min(worst, lp.clarkson_unit_gap(u, v, p))
        yield Outcome({"p": p, "pairs": m, "min_gap": worst}, 0.0, worst, 1e-12, f"p={p}")


# ---------------------------------------------------------------------------
# Sobolev and HLS


def chk_constant(ctx: Context, rng) -> Iterator[Outcome]:
    spec = ctx.spec
    for a in ctx.cfg.alphas:
        S1 = sb.sobolev_constant(ctx.cfg.n, a, spec, refine=False)
        S2 = sb.sobolev_constant(ctx.cfg.n, a, spec.refined(2), refine=False)
        change = abs(S2 - S1) / S2
        yield Outcome({"alpha": a, "S": S1, "S_refined": S2, "relative_change": change},
                      1e-3, 1e-3 - change, 0.0, f"alpha={a}")


def chk_sobolev_bubbles(ctx: Context, rng) -> Iterator[Outcome]:
    if not ctx.bubble_params:
        yield _zero("bubbles")
        return
    rel = ctx.sobolev_bubble_rel
    sys = ctx.system
    scales = np.geomspace(*SAMPLE_SCALES, 11)
    sweep = {"a": scales.tolist(), "relative_deficit": ctx.scale_sweep_rel["sobolev"].tolist()}
    worst = float(np.max(np.abs(rel)))
    yield Outcome({"S": sys.S, "max_abs_relative_deficit": worst, "min_relative": float(rel.min()),
                   "count": int(rel.size), "scale_sweep_report_only": sweep},
                  1e-3, 1e-3 - worst, 0.0)


def _random_field(rng, ctx: Context, i: int) -> np.ndarray:
    spec = ctx.spec
    kind = i % 4
    N = spec.points_per_side
    if kind == 0:
        kmax = int(rng.integers(1, N // 8))
        coeff = np.zeros(N, complex)
        idx = np.r_[0 : kmax + 1, N - kmax : N]
        coeff[idx] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
        v = np.fft.ifft(coeff)
    elif kind == 1:
        theta = sb.BubbleParams(1.0, float(np.exp(rng.uniform(*np.log(SAMPLE_SCALES)))),
                                (rng.uniform(-ctx.cfg.L, ctx.cfg.L),))
        b = sb.bubble(theta, ctx.system, spec, warn=False).values
        v = b + rng.uniform(0, 0.3) * rng.normal(size=N) * np.abs(b).max()
    elif kind == 2:
        v = np.zeros(N, complex)
        for _ in range(2):
            theta = sb.BubbleParams(complex(rng.normal(), rng.normal()),
                                    float(np.exp(rng.uniform(*np.log(SAMPLE_SCALES)))),
                                    (rng.uniform(-ctx.cfg.L, ctx.cfg.L),))
            v = v + sb.bubble(theta, ctx.system, spec, warn=False).values
    else:
        v = rng.normal(size=N) + 1j * rng.normal(size=N)
    v = v * 10.0 ** rng.uniform(-2, 2)
    return v.reshape(spec.shape)


def chk_sobolev_nonneg(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.sobolev_samples
    if m <= 0:
        yield _zero("random Sobolev samples")
        return
    sys = ctx.system
    worst = math.inf
    for i in range(m):
        f = GridFunction(ctx.spec, _random_field(rng, ctx, i))
        worst = min(worst, sb.sobolev_deficit(f, sys) / sb.energy_F(f, sys))
    yield Outcome({"min_relative_deficit": worst, "samples": m, "floor": ctx.bubble_floor},
                  0.0, worst, 3.0 * ctx.bubble_floor)


def chk_fit_recovery(ctx: Context, rng) -> Iterator[Outcome]:
    sys = ctx.system
    worst = 0.0
    params = ctx.bubble_params[:3]
    if not params:
        yield _zero("bubble fits")
        return
    details = []
    for theta in params:
        f = ctx.bubble(theta)
        fit = sb.dist_to_bubbles(f, sys, sb.NormChoice.GRAD)
        rel = fit.distance / sb.grad_norm(f, sys.alpha)
        worst = max(worst, rel)
        details.append({"relative_distance": rel, "a": fit.params.a, "converged": fit.converged})
    yield Outcome({"fits": details}, 1e-6, 1e-6 - worst, 0.0)


def chk_hls_bubbles(ctx: Context, rng) -> Iterator[Outcome]:
    if not ctx.bubble_params:
        yield _zero("dual bubbles")
        return
    rel = ctx.hls_bubble_rel
    worst = float(np.max(np.abs(rel)))
    sweep = {"a": np.geomspace(*SAMPLE_SCALES, 11).tolist(),
             "relative_deficit": ctx.scale_sweep_rel["hls"].tolist()}
    yield Outcome({"max_abs_relative_deficit": worst, "min_relative": float(rel.min()),
                   "count": int(rel.size), "scale_sweep_report_only": sweep},
                  1e-3, 1e-3 - worst, 0.0)


def chk_hls_nonneg(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.hls_samples
    if m <= 0:
        yield _zero("random HLS samples")
        return
    sys = ctx.system
    worst = math.inf
    for i in range(m):
        v = _random_field(rng, ctx, i)
        if i % 4 in (1, 2):
            # Dual-side shapes: images of primal fields under grad E.
            v = lp.grad_energy(GridFunction(ctx.spec, v), sys.p).values
        g = GridFunction(ctx.spec, v)
        worst = min(worst, sb.hls_deficit(g, sys) / (sys.S * sb.energy_E_star(g, sys)))
    yield Outcome({"min_relative_deficit": worst, "samples": m, "floor": ctx.bubble_floor},
                  0.0, worst, 3.0 * ctx.bubble_floor)


def chk_riesz(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.riesz_samples
    if m <= 0:
        yield _zero("Riesz cross-checks")
        return
    spec, a = ctx.spec, ctx.cfg.alpha
    x = spec.coords()[0]
    gauss = GridFunction(spec, np.exp(-sum(c**2 for c in spec.coords())))
    C = sb.quadratic_form(gauss, -a) / sb.riesz_form(gauss, a)
    window = np.exp(-((x / (0.125 * spec.half_width)) ** 2))
    worst = 0.0
    for _ in range(m):
        k = int(rng.integers(4, 40))
        freqs = rng.uniform(0.05, 0.5, k) * rng.choice([-1.0, 1.0], k)
        amps = rng.normal(size=k) + 1j * rng.normal(size=k)
        sig = np.exp(1j * np.multiply.outer(x, freqs)) @ amps
        g = sig * window
        g = g - np.sum(g) / np.sum(window) * window
        gf = GridFunction(spec, g)
        err = abs(sb.quadratic_form(gf, -a) / (C * sb.riesz_form(gf, a)) - 1.0)
        worst = max(worst, err)
    yield Outcome({"normalization": C, "max_relative_mismatch": worst, "samples": m},
                  0.01, 0.01 - worst, 0.0)


# ---------------------------------------------------------------------------
# transfer and local stability


def chk_transfer(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.transfer_samples
    if m <= 0:
        yield _zero("transfer samples")
        return
    sys = ctx.system
    worst, young = math.inf, 0.0
    for i in range(m):
        v = _random_field(rng, ctx, i)
        if i % 2:
            v = lp.grad_energy(GridFunction(ctx.spec, v), sys.p).values
        rep = sb.transfer_inequality_check(GridFunction(ctx.spec, v), sys)
        worst = min(worst, rep.slack / rep.E_star)
        young = max(young, abs(rep.young_residual))
    yield Outcome({"min_relative_slack": worst, "max_young_residual": young, "samples": m},
                  0.0, worst, 1e-9)


def chk_kappa(ctx: Context, rng) -> Iterator[Outcome]:
    sys = ctx.system
    c = sys.ratio
    kc = sys.S / c
    at = sb.kappa_star(kc, sys)
    below = sb.kappa_star(kc * (1.0 - 1e-15), sys)
    above = sb.kappa_star(kc * (1.0 + 1e-15), sys)
    sweep = np.geomspace(kc * 1e-3, kc * 1e3, 2001)
    vals = np.array([sb.kappa_star(k, sys) for k in sweep])
    formula = 0.5 * c * np.minimum(sweep * c / sys.S, 1.0)
    cont = max(abs(at - below), abs(above - at), abs(at - 0.5 * c))
    formula_err = float(np.max(np.abs(vals - formula)))
    monotone = bool(np.all(np.diff(vals) >= 0))
    value = sb.kappa_star(ctx.cfg.kappa_BE, sys)
    margin = min(1e-14 - cont, 1e-14 - formula_err, 0.0 if monotone else -1.0)
    yield Outcome(
        {"kappa_BE": ctx.cfg.kappa_BE, "kappa_star_conditional_on_kappa_BE": value,
         "clamp_point": kc, "clamp_continuity": cont, "formula_error": formula_err,
         "saturation": 0.5 * c, "monotone": monotone},
        1e-14, margin, 0.0,
    )


def chk_local(ctx: Context, rng) -> Iterator[Outcome]:
    m = ctx.cfg.local_samples
    if m <= 0:
        yield _zero("local samples")
        return
    sys = ctx.system
    rep = sb.local_stability_suite(sys, ctx.spec, ctx.cfg.r, ctx.cfg.lam, m, rng,
                                   budget_rel=1e-9)
    rel = [s.margin * 1e-9 / s.budget for s in rep.samples]
    chain = {
        k: min((s.chain_margins[k] for s in rep.samples if s.chain_margins), default=None)
        for k in ("scaled", "unscaled")
    }
    worst = min(rel, default=0.0)
    yield Outcome(
        {"r": rep.r, "lambda": rep.lam, "dual_constant": rep.constant,
         "checked": len(rep.samples),
         "gates": [s.gate for s in rep.samples if s.side == "dual"],
         "excluded_primal_radius": rep.excluded_primal,
         "excluded_dual_energy": rep.excluded_dual_young,
         "excluded_dual_radius": rep.excluded_dual_radius,
         "min_chain_margin": chain, "extrapolated_alpha": rep.extrapolated,
         "min_relative_margin": worst},
        0.0, worst, 1e-9,
    )


# ---------------------------------------------------------------------------
# fast diffusion


def chk_steady(ctx: Context, rng) -> Iterator[Outcome]:
    cfg = ctx.flow_config
    v0 = ctx.flow_corpus["barenblatt"]
    v1 = fd.step(v0, cfg)
    per_step = float(np.max(np.abs(v1.values - v0.values)) / np.max(v0.values))
    control = ctx.flow_runs["barenblatt"][0]
    run = float(np.max(np.abs(control.final.values - v0.values)) / np.max(v0.values))
    yield Outcome({"one_step_relative_change": per_step, "whole_run_relative_change": run,
                   "dt": cfg.time_step}, 1e-6, 1e-6 - per_step, 0.0)


def chk_mass(ctx: Context, rng) -> Iterator[Outcome]:
    drift = {k: max(a.mass_drift(), b.mass_drift()) for k, (a, b) in ctx.flow_runs.items()}
    worst = max(drift.values())
    yield Outcome({"relative_mass_drift": drift}, 1e-4, 1e-4 - worst, 0.0)


def chk_monotone(ctx: Context, rng) -> Iterator[Outcome]:
    budget = ctx.flow_budget
    inc = {k: a.max_increase() for k, (a, _) in ctx.flow_runs.items()}
    ends = {k: [float(a.deficit[0]), float(a.deficit[-1])] for k, (a, _) in ctx.flow_runs.items()}
    worst = max(inc.values())
    yield Outcome({"max_increase": inc, "deficit_start_end": ends, "S": ctx.flow_S},
                  0.0, -worst, budget)


def chk_l1(ctx: Context, rng) -> Iterator[Outcome]:
    out, worst = {}, math.inf
    for k, (a, _) in ctx.flow_runs.items():
        if k == "barenblatt":
            continue
        d = a.l1_dist
        out[k] = {"start": float(d[0]), "end": float(d[-1]),
                  "max_increase": float(np.max(np.diff(d)))}
        drop = float(d[0] - d[-1]) / float(d[0])
        worst = min(worst, drop, -float(np.max(np.diff(d))) / float(d[0]))
    yield Outcome(out, 0.0, worst, 0.0)


def chk_halved(ctx: Context, rng) -> Iterator[Outcome]:
    diff = {k: float(np.max(np.abs(a.deficit - b.deficit))) for k, (a, b) in ctx.flow_runs.items()}
    worst = max(diff.values())
    yield Outcome({"max_deficit_difference": diff}, ctx.flow_budget, -worst, ctx.flow_budget)


def chk_sandwich(ctx: Context, rng) -> Iterator[Outcome]:
    out = {}
    for k, (a, _) in ctx.flow_runs.items():
        lo, hi = a.sandwich
        out[k] = {"min_ratio": lo, "max_ratio": hi, "C": max(hi, 1.0 / lo)}
    yield Outcome(out, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------


_CHECKS = (
    Check("duality", "biconjugate_parabola",
          "f** = f for the parabola x^2 tabulated on [-2, 2]",
          "duality_knots primal knots; uniform dual grid on [-4, 4] and the slope grid",
          "distance <= 2 h^2 with h the primal spacing", ("duality_knots",), chk_biconjugate),
    Check("duality", "abs_containment",
          "E = |x| <= F = 2|x|: dE(0) = [-1, 1] is strictly inside dF(0) = [-2, 2]; "
          "optimizer sets X0 = {0} and Y0 = dE(X0) correspond",
          "201 knots on [-1, 1]", "exact interval endpoints", (), chk_abs_containment),
    Check("duality", "young_gap",
          "Young: f(x) + f*(y) - xy >= 0, with equality on the subgradient graph",
          "young_samples random (x, y) over five convex tables", "min gap >= -1e-12",
          ("young_samples",), chk_young),
    Check("duality", "deficit_gaps",
          "E <= F: y in dF(x) gives E*(y) - F*(y) >= F(x) - E(x); y in dE(x) gives the reverse",
          "deficit_samples subgradient-consistent (x, y)", "gaps >= -1e-12",
          ("deficit_samples",), chk_deficit_gaps),
    Check("duality", "inf_convolution",
          "Psi_hat(t) = inf_s Psi(t - s) + s by running minimum equals brute-force minimisation",
          "Psi = t^2, 2t and (cosh t - 1)/t on [0, 2]", "max abs error <= 1e-10",
          (), chk_inf_convolution),
    Check("lp", "strong_convexity_small_p",
          "p <= 2: ||f2||^2 - ||f1||^2 - <f2 - f1, grad E(f1)> >= (p - 1) ||f2 - f1||_p^2",
          "lp_pairs random pairs per p in p_small, n = 1, N = lp_N",
          "margin >= -1e-9 * max(||f1||, ||f2||, ||f2 - f1||)^2",
          ("lp_pairs", "p_small", "lp_N"), chk_strong_convexity_small),
    Check("lp", "strong_convexity_large_p",
          "p > 2: convexity gap >= (1/4p)(2/3)^(p-1)(||f1|| + ||f2||)^(2-p) ||f2 - f1||_p^p",
          "lp_pairs random pairs per p in p_large", "margin >= -1e-9 * scale",
          ("lp_pairs", "p_large", "lp_N"), chk_strong_convexity_large),
    Check("lp", "lambda_failure",
          "p > 2: ||f||_p^2 is not lambda-convex; a disjoint-support family has "
          "gap / ||f2 - f1||^2 -> 0",
          "t = 1e-1 ... 1e-12", "smallest ratio < 1e-3", ("p_large", "lp_N"), chk_lambda_failure),
    Check("lp", "gradcon",
          "||grad E*(g1) - grad E*(g2)||_p <= C ||g1 - g2||_p'^q with C = 1/(p-1), q = 1 "
          "for p <= 2 and C = (3/2)(4p)^(1/(p-1)) R^((p-2)/(p-1)), q = 1/(p-1) for p > 2, "
          "||g_i|| <= R/2; the ratio for the reciprocal prefactor is recorded, not gated",
          "gradcon_pairs pairs per p in p_gradcon, R = gradcon_R",
          "ratio <= 1 + 1e-9", ("gradcon_pairs", "p_gradcon", "gradcon_R", "lp_N"), chk_gradcon),
    Check("lp", "clarkson_unit",
          "p > 2, unit u, v: 1 - Re<u, v> >= ||u - grad E*(v)||_p^p / (p 2^(p-1))",
          "gradcon_pairs unit pairs per p in p_large", "gap >= -1e-12",
          ("gradcon_pairs", "p_large", "lp_N"), chk_clarkson),
    Check("sobolev", "constant",
          "S_{n,alpha} as the Rayleigh quotient of h, stable under grid refinement",
          "alphas on the (n, L, N) grid and its 2x refinement", "relative change <= 1e-3",
          ("n", "L", "N", "alphas"), chk_constant),
    Check("sobolev", "bubbles",
          "Bubbles z h(eta - eta0) saturate S ||(-Delta)^(alpha/2) f||^2 >= ||f||_p^2",
          "bubbles random (z, eta0) at unit scale; a scale sweep over [10^-0.5, 10^0.5] is reported",
          "|deficit| / F <= 1e-3", ("n", "alpha", "L", "N", "bubbles", "S_override"),
          chk_sobolev_bubbles),
    Check("sobolev", "nonnegativity",
          "Sobolev deficit >= 0 on random inputs",
          "sobolev_samples fields: band-limited, perturbed bubbles, bubble pairs, noise",
          "deficit / F >= -3 x bubble floor (largest |relative deficit| over unit-scale "
          "bubbles and the scale sweep, Sobolev and HLS)",
          ("n", "alpha", "L", "N", "bubbles", "sobolev_samples", "S_override"),
          chk_sobolev_nonneg),
    Check("sobolev", "fit_recovery",
          "dist_to_bubbles finds a bubble exactly",
          "first three random bubbles, gradient norm", "relative distance <= 1e-6",
          ("n", "alpha", "L", "N", "bubbles", "S_override"), chk_fit_recovery),
    Check("hls", "dual_bubbles",
          "grad E maps bubbles to HLS optimizers: S ||g||_p'^2 = ||(-Delta)^(-alpha/2) g||^2",
          "images of the random bubbles under grad E", "|deficit| / (S E*) <= 1e-3",
          ("n", "alpha", "L", "N", "bubbles", "S_override"), chk_hls_bubbles),
    Check("hls", "nonnegativity",
          "HLS deficit >= 0 on random inputs",
          "hls_samples fields and their images under grad E",
          "deficit / (S E*) >= -3 x bubble floor",
          ("n", "alpha", "L", "N", "bubbles", "hls_samples", "S_override"), chk_hls_nonneg),
    Check("hls", "riesz_crosscheck",
          "Fourier form of ||(-Delta)^(-alpha/2) g||^2 equals the real-space Riesz double integral",
          "riesz_samples mean-zero localized band-limited g; constant fixed on a unit Gaussian",
          "relative mismatch <= 1%", ("n", "alpha", "L", "N", "riesz_samples"), chk_riesz),
    Check("transfer", "inequality",
          "E*(g) - F*(g) >= F(f) - E(f) + ((n - 2a)/(n + 2a)) ||g - grad E(f)||_p'^2 "
          "at f = grad F*(g)",
          "transfer_samples random g", "slack / E*(g) >= -1e-9",
          ("n", "alpha", "L", "N", "transfer_samples", "S_override"), chk_transfer),
    Check("transfer", "kappa_star",
          "kappa*_BE = (1/2) c min{S^-1 kappa_BE c, 1}, c = (n - 2a)/(n + 2a); "
          "continuous at the clamp point and saturating at c/2 (conditional on kappa_BE)",
          "kappa_BE and a log sweep over six decades", "errors <= 1e-14",
          ("n", "alpha", "L", "N", "kappa_BE", "S_override"), chk_kappa),
    Check("local", "stability",
          "Local Sobolev stability with (r, lambda) and its dual consequence with "
          "constant (1/2) c min{4 lambda S^-1 c, 1}",
          "local_samples perturbed bubbles and dual bubbles; r, lam are hypotheses",
          "margin / energy >= -1e-9; dual radius gate r/2, r/sqrt2 recorded",
          ("n", "alpha", "L", "N", "r", "lam", "local_samples", "S_override"), chk_local),
    Check("flow", "steady_state",
          "The sampled Barenblatt profile is a steady state of the scheme",
          "one time step and the whole control run", "relative change per step <= 1e-6",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_steady),
    Check("flow", "mass",
          "Mass is conserved by the flow",
          "five-member corpus at dt and dt/2", "relative drift <= 1e-4",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_mass),
    Check("flow", "monotonicity",
          "S ||grad f_t||^2 - ||f_t||_{2n/(n-2)}^2 is nonincreasing along f_t = v^((n-2)/2n)",
          "five-member corpus, sampled flow_samples times",
          "every increase <= 3 x max |deficit| of the steady-state run",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_monotone),
    Check("flow", "l1_convergence",
          "L1 distance to the Barenblatt profile of equal mass decreases",
          "non-steady corpus members",
          "every sampled distance below the previous one, relative to the start",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_l1),
    Check("flow", "halved_dt",
          "Deficit trajectories at dt and dt/2 agree",
          "five-member corpus", "max difference <= monotonicity budget",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_halved),
    Check("flow", "sandwich",
          "v / v_inf lies in [1/C, C] for t >= t_end / 2; C is reported, not asserted",
          "five-member corpus", "report only",
          ("flow_n", "flow_mass", "flow_R", "flow_M", "flow_t_end", "flow_samples", "flow_cfl"),
          chk_sandwich),
)


def checks_for(suite: str) -> list[Check]:
    """Checks of ``suite`` in execution order."""
    if suite not in SUITES:
        raise UnknownSuite(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    if suite == "all":
        return list(_CHECKS)
    return [c for c in _CHECKS if c.suite == suite]


def describe(suite: str) -> str:
    """Human-readable list of the checks of ``suite``."""
    lines = []
    for c in checks_for(suite):
        lines += [
            c.id,
            f"  checks:    {c.statement}",
            f"  inputs:    {c.inputs}",
            f"  tolerance: {c.tolerance}",
        ]
    return "\n".join(lines) + "\n"


def _record(check: Check, ctx: Context, out: Outcome, label: str, t: float) -> DeficitReport:
    cid = check.id + (f"[{label}]" if label else "")
    digest = inputs_digest(
        check=cid, seed=ctx.seed, **{k: getattr(ctx.cfg, k) for k in check.keys}
    )
    return DeficitReport(check.suite, cid, ctx.cfg.digest(), digest, out.measured,
                         out.bound, out.margin, out.budget, t)


def run_suite(suite: str, cfg: Config, seed: int, sink: Callable[[DeficitReport], None]) -> bool:
    """Run every check of ``suite``, passing each record to ``sink`` as it completes.

    A check that raises produces a failing record carrying the exception
    text; the remaining checks still run. Returns True iff all records pass.
    """
    ctx = Context(cfg, seed)
    ok = True
    for check in checks_for(suite):
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                for out in check.fn(ctx, ctx.rng(check.id)):
                    rec = _record(check, ctx, out, out.label, time.perf_counter() - t0)
                    ok &= rec.passed
                    sink(rec)
                    t0 = time.perf_counter()
        except Exception as exc:  # noqa: BLE001  isolation: report and continue
            err = Outcome({"error": f"{type(exc).__name__}: {exc}",
                           "traceback": traceback.format_exc(limit=3)},
                          math.nan, math.nan, 0.0)
            sink(_record(check, ctx, err, "", time.perf_counter() - t0))
            ok = False
    return ok
