"""Radial rescaled fast diffusion and the Sobolev deficit of the lifted flow.

The rescaled fast diffusion equation

    v_t = beta Delta v^m + div(eta v),       beta = 2 - n (1 - m),

conserves mass for ``1 - 2/n < m < 1`` and has the Barenblatt steady states
``(D + c |eta|^2)^(-1/(1-m))`` with ``c = (1 - m) / (2 beta m)``. For
``m = 1 - 1/n`` the lift ``f = v^((n-2)/(2n))`` of a Barenblatt profile is a
Sobolev optimizer, and the Sobolev deficit of the lifted flow is expected to
decrease in time.

The solver works on a cell-centred radial grid ``r_i = i dr`` on
``[0, R_max]`` and writes the equation in flux form

    v_t = r^(1-n) d/dr ( r^(n-1) v d/dr mu ),
    mu  = beta m / (m - 1) v^(m-1) + r^2 / 2.

Face values of ``v`` are arithmetic means, so the sampled Barenblatt
profile, for which ``mu`` is constant, is an exact discrete steady state.
The face at ``r = 0`` has zero area and the face at ``R_max`` is a no-flux
wall, so total mass is conserved to round-off. Time stepping is the
two-stage linearly implicit Rosenbrock method ROS2, with the diffusion
linearised in ``v`` and the drift treated explicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import solve_banded

from .errors import (
    BadInput,
    MonotonicityViolation,
    NegativityClipExceeded,
    RootBracketFailure,
    StabilityViolation,
)
from .sobolev import RadialTail, _radial_terms, _unit_sphere_area

__all__ = [
    "FlowConfig",
    "BarenblattParams",
    "RadialProfile",
    "RadialGrid",
    "barenblatt",
    "barenblatt_D",
    "whole_space_mass",
    "lift",
    "unlift",
    "radial_sobolev_deficit",
    "lifted_tail",
    "step",
    "run_flow",
    "Trajectory",
    "graft",
    "default_corpus",
    "write_trajectory_csv",
]

_ROS2_GAMMA = 1.0 + 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of a flow run.

    ``m`` defaults to ``1 - 1/n``. The time step is ``cfl * dr / R_max``,
    rounded down so that it divides ``sample_every`` exactly.
    """

    n: int = 3
    m: float | None = None
    mass: float = 1.0
    R_max: float = 80.0
    M_points: int = 2048
    t_end: float = 5.0
    samples: int = 100
    cfl: float = 0.5
    dt: float | None = None

    def __post_init__(self):
        if self.n < 3:
            raise BadInput("the flow module needs n >= 3")
        m = 1.0 - 1.0 / self.n if self.m is None else float(self.m)
        object.__setattr__(self, "m", m)
        if not (1.0 - 2.0 / self.n < m < 1.0):
            raise BadInput(f"m={m} outside the mass-conserving range (1 - 2/n, 1)")
        if self.mass <= 0 or self.R_max <= 0 or self.M_points < 8 or self.samples < 1:
            raise BadInput("mass, R_max, M_points and samples must be positive")

    @property
    def beta(self) -> float:
        return 2.0 - self.n * (1.0 - self.m)

    @property
    def dr(self) -> float:
        return self.R_max / (self.M_points - 1)

    @property
    def sample_interval(self) -> float:
        return self.t_end / self.samples

    @property
    def substeps(self) -> int:
        """Steps per sampling interval."""
        dt = self.dt if self.dt is not None else self.cfl * self.dr / self.R_max
        return max(1, math.ceil(self.sample_interval / dt - 1e-9))

    @property
    def time_step(self) -> float:
        return self.sample_interval / self.substeps

    def halved(self) -> "FlowConfig":
        """Same run with half the time step."""
        return FlowConfig(
            self.n, self.m, self.mass, self.R_max, self.M_points, self.t_end,
            self.samples, self.cfl, self.time_step / 2.0,
        )


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centred radial grid with its cell volumes and face areas."""

    n: int
    R_max: float
    M: int
    r: np.ndarray = field(repr=False, compare=False)
    volumes: np.ndarray = field(repr=False, compare=False)
    areas: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def build(cls, n: int, R_max: float, M: int) -> "RadialGrid":
        r = np.linspace(0.0, R_max, M)
        faces = np.concatenate(([0.0], 0.5 * (r[1:] + r[:-1]), [R_max]))
        omega = _unit_sphere_area(n)
        vol = omega * (faces[1:] ** n - faces[:-1] ** n) / n
        area = omega * faces[1:-1] ** (n - 1)
        for a in (r, vol, area):
            a.setflags(write=False)
        return cls(n, R_max, M, r, vol, area)

    @classmethod
    def for_config(cls, cfg: FlowConfig) -> "RadialGrid":
        return cls.build(cfg.n, cfg.R_max, cfg.M_points)

    @property
    def dr(self) -> float:
        return self.R_max / (self.M - 1)

    def mass(self, v: np.ndarray) -> float:
        return math.fsum((self.volumes * v).tolist())

    def l1(self, v: np.ndarray, w: np.ndarray) -> float:
        return math.fsum((self.volumes * np.abs(v - w)).tolist())


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Nonnegative radial density on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise BadInput(f"expected {self.grid.M} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise StabilityViolation("radial profile contains NaN or Inf")
        if np.any(v < 0):
            raise BadInput("radial profile must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    @property
    def dim(self) -> int:
        return self.grid.n

    def mass(self) -> float:
        return self.grid.mass(self.values)


@dataclass(frozen=True)
class BarenblattParams:
    """Barenblatt steady state of mass ``M``; ``D`` is fixed by the mass."""

    M: float
    n: int = 3
    m: float | None = None
    D: float = field(init=False)

    def __post_init__(self):
        m = 1.0 - 1.0 / self.n if self.m is None else float(self.m)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "D", barenblatt_D(self.M, self.n, m))

    @property
    def beta(self) -> float:
        return 2.0 - self.n * (1.0 - self.m)

    @property
    def c(self) -> float:
        return (1.0 - self.m) / (2.0 * self.beta * self.m)

    @property
    def exponent(self) -> float:
        return -1.0 / (1.0 - self.m)

    def __call__(self, r):
        return (self.D + self.c * np.asarray(r) ** 2) ** self.exponent


def whole_space_mass(D: float, n: int, m: float) -> float:
    """Mass of ``(D + c r^2)^(-1/(1-m))`` over ``R^n`` by adaptive quadrature."""
    beta = 2.0 - n * (1.0 - m)
    c = (1.0 - m) / (2.0 * beta * m)
    e = -1.0 / (1.0 - m)
    val, _ = integrate.quad(lambda r: (D + c * r * r) ** e * r ** (n - 1), 0, np.inf, limit=200)
    return _unit_sphere_area(n) * val


def barenblatt_D(M: float, n: int = 3, m: float | None = None, rtol: float = 1e-10) -> float:
    """Solve ``mass(D) = M`` by bracketed root finding on ``log D``."""
    if m is None:
        m = 1.0 - 1.0 / n
    if M <= 0:
        raise BadInput("mass must be positive")
    fn = lambda logD: math.log(whole_space_mass(math.exp(logD), n, m)) - math.log(M)
    lo, hi = -20.0, 20.0
    if fn(lo) * fn(hi) > 0:
        raise RootBracketFailure(f"no D in [e^{lo}, e^{hi}] gives mass {M}")
    logD = optimize.brentq(fn, lo, hi, xtol=1e-14, rtol=rtol)
    return math.exp(logD)


def barenblatt(params: BarenblattParams, grid: RadialGrid) -> RadialProfile:
    """Sample the Barenblatt profile on ``grid``."""
    return RadialProfile(grid, params(grid.r))


def lift(v: RadialProfile | np.ndarray, n: int | None = None):
    """Pointwise ``v^((n-2)/(2n))``."""
    if isinstance(v, RadialProfile):
        return RadialProfile(v.grid, lift(v.values, v.dim))
    return np.asarray(v) ** ((n - 2.0) / (2.0 * n))


def unlift(f: RadialProfile | np.ndarray, n: int | None = None):
    """Pointwise ``f^(2n/(n-2))``, the inverse of :func:`lift`."""
    if isinstance(f, RadialProfile):
        return RadialProfile(f.grid, unlift(f.values, f.dim))
    return np.asarray(f) ** (2.0 * n / (n - 2.0))


def lifted_tail(params: BarenblattParams, R: float) -> RadialTail:
    """Tail integrals beyond ``R`` of the lifted Barenblatt profile."""
    n = params.n
    k = (n - 2.0) / (2.0 * n)
    q = lambda r: params(r) ** k
    # d/dr (D + c r^2)^(e k) = 2 c r e k (D + c r^2)^(e k - 1)
    ek = params.exponent * k
    dq = lambda r: 2.0 * params.c * r * ek * (params.D + params.c * r * r) ** (ek - 1.0)
    return RadialTail.from_profile(q, dq, R, n)


def radial_sobolev_deficit(
    f: RadialProfile | np.ndarray,
    n: int,
    S: float,
    r: np.ndarray | None = None,
    tail: RadialTail | None = None,
) -> float:
    """``S omega int f_r^2 r^(n-1) - (omega int f^(2n/(n-2)) r^(n-1))^((n-2)/n)``.

    Trapezoid quadrature with second-order one-sided differences at the
    ends. With ``tail`` the profile is continued beyond ``R_max`` by the
    reference profile scaled to match ``f(R_max)``.
    """
    if isinstance(f, RadialProfile):
        r, vals = f.r, f.values
    else:
        vals = np.asarray(f, dtype=float)
    if not np.any(vals):
        return 0.0
    g, pw = _radial_terms(r, vals, n, tail)
    return math.fsum([S * g, -(pw ** ((n - 2.0) / n))])


class _Operator:
    """Flux divergence and its diffusion linearisation on a radial grid."""

    def __init__(self, grid: RadialGrid, cfg: FlowConfig):
        self.grid = grid
        self.m = cfg.m
        self.beta = cfg.beta
        r = grid.r
        self.drift = 0.5 * (r[1:] ** 2 - r[:-1] ** 2)
        self.coef = grid.areas / grid.dr

    def _faces(self, v):
        return self.coef * 0.5 * (v[1:] + v[:-1])

    def rhs(self, v: np.ndarray) -> np.ndarray:
        m, beta = self.m, self.beta
        phi = beta * m / (m - 1.0) * v ** (m - 1.0)
        K = self._faces(v)
        flux = K * ((phi[1:] - phi[:-1]) + self.drift)
        out = np.zeros_like(v)
        out[:-1] += flux
        out[1:] -= flux
        return out

    def matrix(self, v: np.ndarray, dt: float) -> np.ndarray:
        """Banded ``V + gamma dt A`` with ``A`` the linearised diffusion."""
        m, beta = self.m, self.beta
        dphi = beta * m * v ** (m - 2.0)
        K = self._faces(v)
        Kf = np.concatenate(([0.0], K, [0.0]))
        gd = _ROS2_GAMMA * dt
        ab = np.zeros((3, v.size))
        ab[1] = self.grid.volumes + gd * (Kf[1:] + Kf[:-1]) * dphi
        ab[0, 1:] = -gd * K * dphi[1:]
        ab[2, :-1] = -gd * K * dphi[:-1]
        return ab


@dataclass
class _StepLog:
    clipped: float = 0.0


def _advance(op: _Operator, v: np.ndarray, dt: float, mass: float, log: _StepLog) -> np.ndarray:
    with np.errstate(all="raise"):
        try:
            ab = op.matrix(v, dt)
            k1 = solve_banded((1, 1), ab, op.rhs(v))
            mid = v + dt * k1
            if np.any(mid <= 0):
                raise FloatingPointError("intermediate stage lost positivity")
            k2 = solve_banded((1, 1), ab, op.rhs(mid) - 2.0 * op.grid.volumes * k1)
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            raise StabilityViolation(f"time step failed: {exc}") from exc
    out = v + dt * (1.5 * k1 + 0.5 * k2)
    if not np.all(np.isfinite(out)):
        raise StabilityViolation("time step produced non-finite values")
    neg = out < 0
    if neg.any():
        clipped = -math.fsum((op.grid.volumes[neg] * out[neg]).tolist())
        if clipped > 1e-8 * mass:
            raise NegativityClipExceeded(f"clipped mass {clipped:.3e} in one step")
        log.clipped += clipped
        out = np.where(neg, 0.0, out)
    return out


def step(v: RadialProfile, cfg: FlowConfig, dt: float | None = None) -> RadialProfile:
    """Advance ``v`` by one time step (``cfg.time_step`` unless ``dt`` is given)."""
    op = _Operator(v.grid, cfg)
    out = _advance(op, v.values, cfg.time_step if dt is None else dt, v.mass(), _StepLog())
    return RadialProfile(v.grid, out)


@dataclass(frozen=True)
class Trajectory:
    """Samples of a flow run."""

    t: np.ndarray
    mass: np.ndarray
    deficit: np.ndarray
    l1_dist: np.ndarray
    min_v: np.ndarray
    clipped_mass: np.ndarray
    final: RadialProfile
    sandwich: tuple[float, float]

    def max_increase(self) -> float:
        return float(np.max(np.diff(self.deficit))) if self.deficit.size > 1 else -math.inf

    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0])

    def check_monotone(self, budget: float) -> None:
        """Raise :class:`MonotonicityViolation` if some increase exceeds ``budget``."""
        inc = np.diff(self.deficit)
        k = int(np.argmax(inc))
        if inc.size and inc[k] > budget:
            raise MonotonicityViolation(
                f"deficit rose by {inc[k]:.3e} between t={self.t[k]:.4g} and "
                f"t={self.t[k + 1]:.4g}; budget {budget:.3e}"
            )

    def rows(self):
        for i in range(self.t.size):
            yield (
                self.t[i], self.mass[i], self.deficit[i], self.l1_dist[i],
                self.min_v[i], self.clipped_mass[i],
            )


def run_flow(
    v0: RadialProfile,
    cfg: FlowConfig,
    S: float,
    target: BarenblattParams | None = None,
    t_star: float | None = None,
) -> Trajectory:
    """Integrate from ``v0`` to ``cfg.t_end`` and sample the diagnostics.

    The deficit is that of the lifted profile, continued beyond ``R_max`` by
    the lifted target Barenblatt scaled to the boundary value. The sandwich
    ratio ``(min, max)`` of ``v / v_inf`` is taken over samples with
    ``t >= t_star`` (default: the second half of the run) and is reported,
    not asserted.
    """
    grid = v0.grid
    n = grid.n
    if target is None:
        target = BarenblattParams(cfg.mass, n, cfg.m)
    vinf = target(grid.r)
    tail = lifted_tail(target, grid.R_max)
    op = _Operator(grid, cfg)
    dt = cfg.time_step
    t_star = 0.5 * cfg.t_end if t_star is None else t_star
    log = _StepLog()
    v = v0.values.copy()
    M0 = v0.mass()

    ts, masses, defs, l1s, mins, clips = [], [], [], [], [], []
    lo, hi = math.inf, -math.inf

    def record(t):
        nonlocal lo, hi
        ts.append(t)
        masses.append(grid.mass(v))
        defs.append(radial_sobolev_deficit(lift(v, n), n, S, grid.r, tail))
        l1s.append(grid.l1(v, vinf))
        mins.append(float(v.min()))
        clips.append(log.clipped)
        if t >= t_star - 1e-12:
            ratio = v / vinf
            lo, hi = min(lo, float(ratio.min())), max(hi, float(ratio.max()))

    record(0.0)
    for k in range(cfg.samples):
        for _ in range(cfg.substeps):
            v = _advance(op, v, dt, M0, log)
        record((k + 1) * cfg.sample_interval)
    arr = lambda x: np.asarray(x, dtype=float)
    return Trajectory(
        arr(ts), arr(masses), arr(defs), arr(l1s), arr(mins), arr(clips),
        RadialProfile(grid, v), (lo, hi),
    )


def _smoothstep_cut(r: np.ndarray, a: float, b: float) -> np.ndarray:
    x = np.clip((r - a) / (b - a), 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


def graft(core: np.ndarray, target: BarenblattParams, grid: RadialGrid) -> RadialProfile:
    """Blend ``core`` into the Barenblatt tail on ``[R/8, R/4]`` and match its mass.

    The core is rescaled so that the grafted profile has the same mass on
    the grid as the sampled target profile.
    """
    R = grid.R_max
    w = _smoothstep_cut(grid.r, R / 8.0, R / 4.0)
    vinf = target(grid.r)
    outer = (1.0 - w) * vinf
    inner = w * np.asarray(core, dtype=float)
    s = (grid.mass(vinf) - grid.mass(outer)) / grid.mass(inner)
    if s <= 0:
        raise BadInput("core cannot be scaled to the target mass")
    return RadialProfile(grid, outer + s * inner)


def default_corpus(cfg: FlowConfig) -> dict[str, RadialProfile]:
    """Five initial data: the steady state and four grafted perturbations.

    ``barenblatt``
        The target steady state (control run).
    ``compressed``, ``spread``
        Barenblatt profiles with ``D`` = 3 and 15, grafted onto the target tail.
    ``bump``
        A smooth compactly supported bump on ``[0, R/4)``, grafted.
    ``mixture``
        Equal mixture of Barenblatt shapes with ``D`` = 2 and 20, grafted.
    """
    grid = RadialGrid.for_config(cfg)
    target = BarenblattParams(cfg.mass, cfg.n, cfg.m)
    shape = lambda D: (D + target.c * grid.r**2) ** target.exponent
    rho = grid.R_max / 4.0
    x = np.clip(grid.r / rho, 0.0, 1.0 - 1e-12)
    bump = np.where(grid.r < rho, np.exp(1.0 - 1.0 / (1.0 - x * x)), 0.0)
    return {
        "barenblatt": barenblatt(target, grid),
        "compressed": graft(shape(3.0), target, grid),
        "spread": graft(shape(15.0), target, grid),
        "bump": graft(bump, target, grid),
        "mixture": graft(0.5 * shape(2.0) + 0.5 * shape(20.0), target, grid),
    }


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns ``t, mass, deficit, l1_dist_to_barenblatt, min_v, clipped_mass``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "deficit", "l1_dist_to_barenblatt", "min_v", "clipped_mass"])
        for row in traj.rows():
            w.writerow([repr(float(x)) for x in row])
