"""Geometry of the squared L^p norm on grid functions.

``E(f) = ||f||_p^2`` is paired with ``E*(g) = ||g||_{p'}^2`` through the
pairing ``<f, g> = 2 Re int conj(f) g``. Its gradient is

    grad E(f) = ||f||_p^(2-p) |f|^(p-2) f,

a norm-preserving bijection from ``L^p`` to ``L^{p'}`` whose inverse is the
same formula with ``p'`` in place of ``p``. This module evaluates those maps
and the quantitative convexity and continuity bounds that go with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadExponent, DegenerateInput, NotUnit, SpecMismatch
from .grid import GridFunction, GridSpec, lp_norm, pairing

__all__ = [
    "ExponentPair",
    "ConvexityWitness",
    "energy",
    "grad_energy",
    "grad_energy_dual",
    "strong_convexity_gap",
    "strong_convexity_constant",
    "grad_continuity_ratio",
    "grad_continuity_constant",
    "clarkson_unit_gap",
    "second_difference",
    "lambda_witness",
    "lambda_witness_ratio",
    "random_pair",
    "PAIR_KINDS",
]


@dataclass(frozen=True)
class ExponentPair:
    """Conjugate exponents ``p`` and ``p' = p / (p - 1)`` with ``1 < p < inf``."""

    p: float

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise BadExponent(f"p must lie in (1, inf), got {self.p}")

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True, eq=False)
class ConvexityWitness:
    """Convexity gap of ``E`` along a pair together with its predicted lower bound."""

    p: float
    f1: GridFunction
    f2: GridFunction
    norm1: float
    norm2: float
    dist: float
    gap: float
    predicted_lower_bound: float

    @property
    def margin(self) -> float:
        return self.gap - self.predicted_lower_bound

    @property
    def scale(self) -> float:
        """Magnitude against which round-off in ``gap`` is measured."""
        return max(self.norm1, self.norm2, self.dist) ** 2

    def row(self) -> tuple[float, ...]:
        """``(p, ||f1||, ||f2||, ||f2 - f1||, gap, bound, margin)`` for CSV export."""
        return (
            self.p,
            self.norm1,
            self.norm2,
            self.dist,
            self.gap,
            self.predicted_lower_bound,
            self.margin,
        )


def _check_p(p: float) -> None:
    if not (1.0 < p < math.inf):
        raise BadExponent(f"p must lie in (1, inf), got {p}")


def energy(f: GridFunction, p: float) -> float:
    """``E(f) = ||f||_p^2``."""
    _check_p(p)
    return lp_norm(f, p) ** 2


def _sgn_power(values: np.ndarray, q: float) -> np.ndarray:
    """``|w|^q sgn(w)`` with ``sgn(w) = w / |w|`` and ``sgn(0) = 0``."""
    a = np.abs(values)
    out = np.zeros_like(values)
    nz = a > 0
    out[nz] = a[nz] ** (q - 1.0) * values[nz]
    return out


def grad_energy(f: GridFunction, p: float) -> GridFunction:
    """``||f||_p^(2-p) |f|^(p-1) sgn(f)``, and 0 at ``f = 0``."""
    _check_p(p)
    if p == 2.0:
        return f
    nf = lp_norm(f, p)
    if nf == 0.0:
        return GridFunction.zeros(f.spec)
    # Normalise first so that large |f|^(p-1) cannot overflow.
    u = f.values / nf
    return GridFunction(f.spec, nf * _sgn_power(u, p - 1.0))


def grad_energy_dual(g: GridFunction, p: float) -> GridFunction:
    """Gradient of ``E*(g) = ||g||_{p'}^2``; the inverse of :func:`grad_energy`."""
    return grad_energy(g, ExponentPair(p).p_dual)


def strong_convexity_constant(p: float) -> float:
    """Constant ``(1 / 4p) (2/3)^(p-1)`` of the ``p``-power bound for ``p > 2``."""
    return (2.0 / 3.0) ** (p - 1.0) / (4.0 * p)


def strong_convexity_gap(f1: GridFunction, f2: GridFunction, p: float) -> ConvexityWitness:
    """Convexity gap ``E(f2) - E(f1) - <f2 - f1, grad E(f1)>`` and its lower bound.

    The bound is ``(p - 1) ||f2 - f1||_p^2`` for ``p <= 2`` and
    ``(1/4p)(2/3)^(p-1) (||f1||_p + ||f2||_p)^(2-p) ||f2 - f1||_p^p`` for
    ``p > 2``. The gap is assembled with :func:`math.fsum`.
    """
    _check_p(p)
    if f1.spec != f2.spec:
        raise SpecMismatch("f1 and f2 live on different grids")
    d = f2 - f1
    n1, n2, nd = lp_norm(f1, p), lp_norm(f2, p), lp_norm(d, p)
    g1 = grad_energy(f1, p)
    gap = math.fsum([n2 * n2, -n1 * n1, -pairing(d, g1)])
    if p <= 2.0:
        bound = (p - 1.0) * nd * nd
    elif nd == 0.0:
        bound = 0.0
    else:
        bound = strong_convexity_constant(p) * (n1 + n2) ** (2.0 - p) * nd**p
    return ConvexityWitness(p, f1, f2, n1, n2, nd, gap, bound)


def grad_continuity_constant(
    p: float,
    R: float | None = None,
    form: str = "derived",
    norms: tuple[float, float] | None = None,
) -> float:
    """Prefactor ``C`` in ``||grad E*(g1) - grad E*(g2)||_p <= C ||g1 - g2||_{p'}^q``.

    For ``p <= 2`` this is ``1 / (p - 1)`` with ``q = 1``. For ``p > 2``,
    ``q = 1 / (p - 1)`` and the prefactor depends on ``form``:

    ``"derived"``
        ``(3/2) (4p)^(1/(p-1)) R^((p-2)/(p-1))``, which follows from the
        ``p``-power convexity bound when ``max ||g_i|| <= R / 2``.
    ``"derived_norms"``
        The same with ``R`` replaced by ``||g1|| + ||g2||`` (pass ``norms``).
    ``"reciprocal"``
        ``(2/3) (1/4p)^(1/(p-1)) R^((2-p)/(p-1))``, the reciprocal of the
        derived prefactor. It is far too small and fails on simple inputs;
        it is kept so that the counterexample can be reproduced.
    """
    _check_p(p)
    if p <= 2.0:
        return 1.0 / (p - 1.0)
    if form == "derived_norms":
        if norms is None:
            raise ValueError("form 'derived_norms' needs the pair of norms")
        R = norms[0] + norms[1]
    elif R is None:
        raise ValueError("p > 2 needs the radius R")
    e = 1.0 / (p - 1.0)
    if form in ("derived", "derived_norms"):
        return 1.5 * (4.0 * p) ** e * R ** ((p - 2.0) * e)
    if form == "reciprocal":
        return (2.0 / 3.0) * (1.0 / (4.0 * p)) ** e * R ** ((2.0 - p) * e)
    raise ValueError(f"unknown form {form!r}")


def grad_continuity_ratio(
    g1: GridFunction,
    g2: GridFunction,
    p: float,
    R: float | None = None,
    form: str = "derived",
) -> float:
    """Ratio of ``||grad E*(g1) - grad E*(g2)||_p`` to its predicted bound.

    For ``p > 2`` both ``||g_i||_{p'}`` must be at most ``R / 2``.
    """
    _check_p(p)
    pd = ExponentPair(p).p_dual
    dg = lp_norm(g1 - g2, pd)
    if dg == 0.0:
        raise DegenerateInput("g1 and g2 coincide")
    num = lp_norm(grad_energy_dual(g1, p) - grad_energy_dual(g2, p), p)
    if p <= 2.0:
        rhs = grad_continuity_constant(p) * dg
    else:
        n1, n2 = lp_norm(g1, pd), lp_norm(g2, pd)
        if form != "derived_norms":
            if R is None:
                raise ValueError("p > 2 needs the radius R")
            if max(n1, n2) > 0.5 * R * (1 + 1e-12):
                raise ValueError(f"max norm {max(n1, n2)} exceeds R/2 = {R / 2}")
        c = grad_continuity_constant(p, R, form, norms=(n1, n2))
        rhs = c * dg ** (1.0 / (p - 1.0))
    return num / rhs


def clarkson_unit_gap(u: GridFunction, v: GridFunction, p: float, tol: float = 1e-10) -> float:
    """``(1 - Re int u conj(v)) - ||u - grad E*(v)||_p^p / (p 2^(p-1))`` for unit inputs.

    Requires ``p > 2``, ``||u||_p = 1`` and ``||v||_{p'} = 1``.
    """
    if not p > 2.0:
        raise BadExponent(f"the unit-vector bound needs p > 2, got {p}")
    pd = ExponentPair(p).p_dual
    nu, nv = lp_norm(u, p), lp_norm(v, pd)
    if abs(nu - 1.0) > tol or abs(nv - 1.0) > tol:
        raise NotUnit(f"||u||_p = {nu}, ||v||_p' = {nv}")
    inner = 0.5 * pairing(v, u)
    dist = lp_norm(u - grad_energy_dual(v, p), p)
    return math.fsum([1.0, -inner, -(dist**p) / (p * 2.0 ** (p - 1.0))])


def second_difference(f: GridFunction, g: GridFunction, p: float, step: float = 1e-3) -> float:
    """Centred second difference of ``t -> ||f + t g||_p^2`` at ``t = 0``."""
    e_plus = energy(f + step * g, p)
    e_zero = energy(f, p)
    e_minus = energy(f - step * g, p)
    return math.fsum([e_plus, -2.0 * e_zero, e_minus]) / step**2


def lambda_witness(spec: GridSpec, p: float, t: float) -> tuple[GridFunction, GridFunction]:
    """Pair ``(u, u + t w)`` with ``w`` supported where ``u`` vanishes.

    Along this direction ``||u + t w||_p^2`` grows like ``t^p``, so the gap
    divided by ``||f2 - f1||_p^2`` tends to zero as ``t -> 0`` when ``p > 2``.
    """
    x = spec.coords()[0]
    L = spec.half_width
    u = np.where(x < 0, np.sin(np.pi * x / L) ** 2, 0.0)
    w = np.where(x >= 0, np.sin(np.pi * x / L) ** 2, 0.0)
    u = np.broadcast_to(u, spec.shape)
    w = np.broadcast_to(w, spec.shape)
    f1 = GridFunction(spec, u)
    return f1, GridFunction(spec, u + t * w)


def lambda_witness_ratio(spec: GridSpec, p: float, t: float) -> float:
    """``gap / ||f2 - f1||_p^2`` along :func:`lambda_witness`, free of cancellation.

    The supports of ``u`` and ``w`` are disjoint, so the pairing term of the
    gap vanishes and, with ``A = ||u||_p^p`` and ``B = ||w||_p^p``,

        gap = A^(2/p) expm1((2/p) log1p(t^p B / A)),   ||f2 - f1||_p^2 = t^2 B^(2/p).

    Evaluating the gap this way keeps full relative accuracy when ``t^p`` is
    far below machine precision, where the direct difference of energies
    would be pure round-off.
    """
    _check_p(p)
    u, f2 = lambda_witness(spec, p, 1.0)
    w = f2 - u
    A = lp_norm(u, p) ** p
    B = lp_norm(w, p) ** p
    gap = A ** (2.0 / p) * math.expm1((2.0 / p) * math.log1p(t**p * B / A))
    return gap / (t * t * B ** (2.0 / p))


def _band_limited(rng: np.random.Generator, spec: GridSpec, kmax: int) -> np.ndarray:
    N = spec.points_per_side
    coeff = np.zeros(spec.shape, dtype=np.complex128)
    sl = tuple(
        np.r_[0 : kmax + 1, N - kmax : N] for _ in range(spec.dim)
    )
    idx = np.ix_(*sl)
    shape = coeff[idx].shape
    coeff[idx] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    vals = np.fft.ifftn(coeff) * spec.size
    return vals / np.max(np.abs(vals))


PAIR_KINDS = ("smooth", "disjoint", "near_parallel", "sign_flip", "rough")


def random_pair(
    rng: np.random.Generator, spec: GridSpec, kind: str, complex_valued: bool = True
) -> tuple[GridFunction, GridFunction]:
    """Draw a test pair of the requested kind.

    ``smooth`` pairs are independent band-limited fields. ``disjoint`` pairs
    have disjoint supports. ``near_parallel`` pairs satisfy
    ``f2 = (1 + eps) f1`` with tiny ``eps``. ``sign_flip`` pairs are
    ``f2 = -c f1``. ``rough`` pairs are white noise with random amplitudes.
    """
    kmax = int(rng.integers(1, max(2, spec.points_per_side // 8)))

    def field():
        v = _band_limited(rng, spec, kmax)
        if not complex_valued:
            v = v.real
        return v * 10.0 ** rng.uniform(-2, 2)

    if kind == "smooth":
        a, b = field(), field()
    elif kind == "disjoint":
        a, b = field(), field()
        x = spec.coords()[0]
        cut = rng.uniform(-0.5, 0.5) * spec.half_width
        a = np.where(np.broadcast_to(x < cut, spec.shape), a, 0.0)
        b = np.where(np.broadcast_to(x >= cut, spec.shape), b, 0.0)
    elif kind == "near_parallel":
        a = field()
        eps = 10.0 ** rng.uniform(-6, -1) * rng.choice([-1.0, 1.0])
        b = (1.0 + eps) * a
    elif kind == "sign_flip":
        a = field()
        b = -(10.0 ** rng.uniform(-1, 1)) * a
    elif kind == "rough":
        shape = spec.shape
        a = rng.standard_normal(shape) * 10.0 ** rng.uniform(-2, 2)
        b = rng.standard_normal(shape) * 10.0 ** rng.uniform(-2, 2)
        if complex_valued:
            a = a + 1j * rng.standard_normal(shape) * np.abs(a).mean()
            b = b + 1j * rng.standard_normal(shape) * np.abs(b).mean()
    else:
        raise ValueError(f"unknown pair kind {kind!r}")
    return GridFunction(spec, a), GridFunction(spec, b)
