"""Convex duality on tabulated one-dimensional functions.

A :class:`TabulatedConvexFn` is the piecewise-linear interpolant of
``(knot, value)`` pairs, equal to ``+inf`` outside the finite part of the
table. Conjugates are discrete: ``f*(y) = max_i (x_i y - f(x_i))`` over the
finite knots, which is the exact Legendre transform of the interpolant. The
pairing of the abstract dual pair is the product ``<x, y> = x y``.

``+inf`` is stored as ``numpy.inf`` together with a finiteness mask, and is
never used as an arithmetic operand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainMismatch,
    EmptyDomain,
    NotConvex,
    NotDominated,
    OutOfDomain,
    PreconditionViolated,
)

__all__ = [
    "TabulatedConvexFn",
    "SubgradientSet",
    "RateFn",
    "MonotoneTable",
    "legendre",
    "conjugate_at",
    "biconjugate_check",
    "subgradient",
    "young_gap",
    "OptimizerDualityReport",
    "optimizer_duality_check",
    "deficit_duality_gaps",
    "lambda_convexity_constant",
    "three_point_lambda",
    "candidate_remainders",
    "rate_min",
    "psi_from_phi",
    "inf_convolution_hat",
    "brute_force_inf_convolution",
    "read_csv",
    "write_csv",
]

_SLOPE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabulatedConvexFn:
    """Piecewise-linear convex function given by a table.

    Parameters
    ----------
    knots : array_like
        Strictly increasing abscissae.
    values : array_like
        Ordinates; ``numpy.inf`` marks points outside the effective domain.
        The finite entries must form one contiguous block.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.knots, dtype=float)
        v = np.array(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 1:
            raise ValueError("knots and values must be 1-D arrays of equal length")
        if not np.all(np.isfinite(x)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise ValueError("values must be finite or +inf")
        fin = np.isfinite(v)
        if not fin.any():
            raise EmptyDomain("function is identically +inf")
        idx = np.flatnonzero(fin)
        if idx[-1] - idx[0] + 1 != idx.size:
            raise NotConvex("finite values must be contiguous")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", x)
        object.__setattr__(self, "values", v)
        s = self.slopes()
        if s.size > 1:
            # Rounding of the values by eps |v| moves a slope by about
            # eps |v| / dx, which dominates on very short segments.
            xf, vf = self.finite_part()
            dx = np.diff(xf)
            noise = 4 * np.finfo(float).eps * float(np.max(np.abs(vf)))
            tol = _SLOPE_RTOL * max(1.0, float(np.max(np.abs(s))))
            tol = tol + noise * (1 / dx[1:] + 1 / dx[:-1])
            if np.any(np.diff(s) < -tol):
                raise NotConvex("segment slopes must be non-decreasing")

    @classmethod
    def from_callable(cls, fn, knots) -> "TabulatedConvexFn":
        x = np.asarray(knots, dtype=float)
        return cls(x, np.asarray(fn(x), dtype=float))

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def domain(self) -> tuple[float, float]:
        """Closed interval on which the function is finite."""
        idx = np.flatnonzero(self.finite_mask)
        return float(self.knots[idx[0]]), float(self.knots[idx[-1]])

    def finite_part(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.finite_mask
        return self.knots[m], self.values[m]

    def slopes(self) -> np.ndarray:
        """Slopes of the finite segments, in order."""
        x, v = self.finite_part()
        return np.diff(v) / np.diff(x)

    def spacing(self) -> float:
        """Largest gap between consecutive finite knots."""
        x, _ = self.finite_part()
        return float(np.max(np.diff(x))) if x.size > 1 else 0.0

    def __call__(self, x):
        """Evaluate the interpolant; ``+inf`` outside the domain."""
        xs, vs = self.finite_part()
        x = np.asarray(x, dtype=float)
        lo, hi = xs[0], xs[-1]
        inside = (x >= lo) & (x <= hi)
        out = np.full(x.shape, np.inf)
        if xs.size == 1:
            out[inside] = vs[0]
        else:
            out[inside] = np.interp(x[inside], xs, vs)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SubgradientSet:
    """Closed interval ``[lo, hi]``; an infinite end is a half line."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty subgradient interval [{self.lo}, {self.hi}]")

    def contains(self, y: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= y <= self.hi + tol

    def distance(self, y: float) -> float:
        if y < self.lo:
            return self.lo - y
        if y > self.hi:
            return y - self.hi
        return 0.0

    def is_subset_of(self, other: "SubgradientSet", tol: float = 0.0) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol


def conjugate_at(f: TabulatedConvexFn, y) -> np.ndarray:
    """Exact conjugate of the interpolant at arbitrary points ``y``."""
    xs, vs = f.finite_part()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty(y.shape)
    chunk = max(1, 2_000_000 // max(xs.size, 1))
    for start in range(0, y.size, chunk):
        yy = y[start : start + chunk]
        out[start : start + chunk] = np.max(np.outer(yy, xs) - vs, axis=1)
    return out


def legendre(
    f: TabulatedConvexFn, dual_knots, tails: str = "restricted"
) -> TabulatedConvexFn:
    """Discrete Legendre transform on ``dual_knots``.

    Parameters
    ----------
    f : TabulatedConvexFn
        Proper convex table.
    dual_knots : array_like
        Strictly increasing points at which the conjugate is tabulated.
    tails : {"restricted", "linear"}
        ``"restricted"`` conjugates the table as given (``+inf`` outside its
        domain), which yields ``max_i (x_i y - f_i)`` everywhere.
        ``"linear"`` conjugates the extension of ``f`` by its end slopes; at
        a finite domain end this makes ``f*`` equal to ``+inf`` beyond the
        corresponding extreme slope. Ends where the table itself holds
        ``+inf`` stay restricted.

    Returns
    -------
    TabulatedConvexFn
        The conjugate sampled on ``dual_knots``.
    """
    if tails not in ("restricted", "linear"):
        raise ValueError(f"unknown tails mode {tails!r}")
    y = np.asarray(dual_knots, dtype=float)
    vals = conjugate_at(f, y)
    if tails == "linear":
        s = f.slopes()
        # With a single finite knot the extension is the constant through it.
        lo_s, hi_s = (float(s[0]), float(s[-1])) if s.size else (0.0, 0.0)
        tol = _SLOPE_RTOL * max(1.0, abs(lo_s), abs(hi_s))
        fin = f.finite_mask
        if fin[0]:
            vals = np.where(y < lo_s - tol, np.inf, vals)
        if fin[-1]:
            vals = np.where(y > hi_s + tol, np.inf, vals)
    return TabulatedConvexFn(y, vals)


def _default_dual_knots(f: TabulatedConvexFn) -> np.ndarray:
    s = np.unique(f.slopes())
    if s.size >= 2:
        return s
    return np.array([-1.0, 0.0, 1.0])


def biconjugate_check(f: TabulatedConvexFn, dual_knots=None) -> float:
    """Sup distance between ``f`` and ``f**`` over interior finite knots.

    By default the dual table uses the segment slopes of ``f``, where the
    discrete conjugate is exact, so ``f**`` reproduces ``f`` at interior
    knots up to round-off.
    """
    y = _default_dual_knots(f) if dual_knots is None else np.asarray(dual_knots, float)
    fstar = legendre(f, y)
    xs, vs = f.finite_part()
    interior = slice(1, -1) if xs.size > 2 else slice(0, xs.size)
    xi, vi = xs[interior], vs[interior]
    if xi.size == 0:
        return 0.0
    fss = conjugate_at(fstar, xi)
    return float(np.max(np.abs(fss - vi)))


def subgradient(f: TabulatedConvexFn, x: float) -> SubgradientSet:
    """Subdifferential ``[left slope, right slope]`` of the interpolant at ``x``."""
    xs, vs = f.finite_part()
    if not (xs[0] <= x <= xs[-1]):
        raise OutOfDomain(f"x={x} outside the domain [{xs[0]}, {xs[-1]}]")
    s = np.diff(vs) / np.diff(xs)
    j = int(np.searchsorted(xs, x))
    if j < xs.size and xs[j] == x:
        left = s[j - 1] if j >= 1 else -np.inf
        right = s[j] if j < s.size else np.inf
        if left > right:
            # Convexity was validated on construction, so an inversion is
            # round-off between two equal slopes.
            left = right = 0.5 * (left + right)
        return SubgradientSet(float(left), float(right))
    seg = float(s[j - 1])
    return SubgradientSet(seg, seg)


def young_gap(f: TabulatedConvexFn, x: float, y: float) -> float:
    """``f(x) + f*(y) - x y``; nonnegative, zero exactly on the subgradient graph."""
    fx = f(x)
    if math.isinf(fx):
        raise OutOfDomain(f"x={x} outside the domain of f")
    fy = float(conjugate_at(f, y)[0])
    return math.fsum([fx, fy, -x * y])


def _cell(knots: np.ndarray) -> float:
    return float(np.max(np.diff(knots))) if knots.size > 1 else 0.0


def _near(points: np.ndarray, value: float, tol: float) -> bool:
    return points.size > 0 and float(np.min(np.abs(points - value))) <= tol


@dataclass(frozen=True)
class OptimizerDualityReport:
    """Outcome of :func:`optimizer_duality_check`."""

    X0: np.ndarray
    Y0: np.ndarray
    dual_knots: np.ndarray
    primal_to_dual: bool
    dual_to_primal: bool
    sgcont: bool
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.primal_to_dual and self.dual_to_primal and self.sgcont


def optimizer_duality_check(
    E: TabulatedConvexFn,
    F: TabulatedConvexFn,
    dual_knots=None,
    tol: float = 1e-9,
) -> OptimizerDualityReport:
    """Verify that the optimizer sets of ``E <= F`` and ``F* <= E*`` correspond.

    ``X0`` collects the knots where ``F - E`` vanishes and ``Y0`` the dual knots
    where ``E* - F*`` vanishes. The report states whether every point of
    ``dE(x0)`` lies within one dual cell of ``Y0``, whether every point of
    ``dF*(y0)`` lies within one primal cell of ``X0``, and whether
    ``dE(x0) ⊆ dF(x0)`` at every ``x0`` in ``X0``.
    """
    xE, _ = E.finite_part()
    xF, _ = F.finite_part()
    shared = np.union1d(xE, xF)
    eE, eF = np.asarray(E(shared)), np.asarray(F(shared))
    both = np.isfinite(eE) & np.isfinite(eF)
    diff = np.where(both, eF - np.where(both, eE, 0.0), 0.0)
    scale = max(1.0, float(np.max(np.abs(np.where(both, eE, 0.0)))))
    bad = (both & (diff < -tol * scale)) | (~np.isfinite(eE) & np.isfinite(eF))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise NotDominated(f"E > F at x={shared[k]}")
    X0 = shared[both & (diff <= tol * scale)]

    if dual_knots is None:
        dual_knots = np.union1d(E.slopes(), F.slopes())
        if dual_knots.size < 2:
            dual_knots = np.array([-1.0, 0.0, 1.0])
    y = np.asarray(dual_knots, dtype=float)
    Es, Fs = conjugate_at(E, y), conjugate_at(F, y)
    dscale = max(1.0, float(np.max(np.abs(Es))))
    Y0 = y[(Es - Fs) <= tol * dscale]
    ycell, xcell = _cell(y), _cell(shared)

    primal_to_dual = True
    sgcont = True
    for x0 in X0:
        dE = subgradient(E, float(x0))
        dF = subgradient(F, float(x0))
        sgcont &= dE.is_subset_of(dF, tol=_SLOPE_RTOL * dscale)
        lo, hi = max(dE.lo, y[0]), min(dE.hi, y[-1])
        if lo > hi:
            continue
        probes = np.concatenate(([lo, hi], y[(y >= lo) & (y <= hi)]))
        primal_to_dual &= all(_near(Y0, float(q), ycell + 1e-12) for q in probes)

    dual_to_primal = True
    Ftab = TabulatedConvexFn(y, Fs)
    for y0 in Y0:
        dFs = subgradient(Ftab, float(y0))
        lo, hi = max(dFs.lo, shared[0]), min(dFs.hi, shared[-1])
        if lo > hi:
            dual_to_primal = False
            continue
        for q in (lo, hi):
            dual_to_primal &= _near(X0, float(q), xcell + 1e-12)

    return OptimizerDualityReport(
        X0=X0,
        Y0=Y0,
        dual_knots=y,
        primal_to_dual=bool(primal_to_dual),
        dual_to_primal=bool(dual_to_primal),
        sgcont=bool(sgcont),
        tolerance=tol,
    )


def deficit_duality_gaps(
    E: TabulatedConvexFn,
    F: TabulatedConvexFn,
    x: float,
    y: float,
    tol: float = 1e-9,
) -> tuple[float, float]:
    """Return the primal-to-dual and dual-to-primal deficit gaps.

    ``gap1 = (E*(y) - F*(y)) - (F(x) - E(x))`` is nonnegative whenever
    ``y`` is in ``dF(x)``. ``gap2 = -gap1`` is nonnegative whenever ``x`` is
    in ``dE*(y)``, which is the same as ``y`` in ``dE(x)``. Both numbers are
    returned; :class:`PreconditionViolated` is raised when neither
    subgradient condition holds within ``tol``, and its message carries the
    two measured distances.
    """
    dF = subgradient(F, x).distance(y)
    dE = subgradient(E, x).distance(y)
    if dF > tol and dE > tol:
        raise PreconditionViolated(
            f"y={y} is {dF:.3e} from dF(x) and {dE:.3e} from dE(x) at x={x}"
        )
    Es = float(conjugate_at(E, y)[0])
    Fs = float(conjugate_at(F, y)[0])
    gap1 = math.fsum([Es, -Fs, -F(x), E(x)])
    return gap1, -gap1


def lambda_convexity_constant(f: TabulatedConvexFn) -> float:
    """Largest ``lam`` with ``f(x2) >= f(x1) + (x2 - x1) y + lam (x2 - x1)^2`` on knots.

    The inequality is required for all pairs of finite knots and every ``y``
    in ``df(x1)``; only the finite ends of each subgradient interval matter.
    """
    xs, vs = f.finite_part()
    best = math.inf
    for i, x1 in enumerate(xs):
        sg = subgradient(f, float(x1))
        d = xs - x1
        mask = d != 0
        for yv in (sg.lo, sg.hi):
            if not math.isfinite(yv):
                continue
            # A point below/above an infinite end only constrains one side.
            sel = mask.copy()
            if not math.isfinite(sg.hi):
                sel &= d < 0
            if not math.isfinite(sg.lo):
                sel &= d > 0
            if not sel.any():
                continue
            r = (vs[sel] - vs[i] - d[sel] * yv) / d[sel] ** 2
            best = min(best, float(r.min()))
    return best


def three_point_lambda(f: TabulatedConvexFn) -> float:
    """Largest ``lam`` in the three-point form of lambda-convexity over knot triples."""
    xs, vs = f.finite_part()
    best = math.inf
    n = xs.size
    for i in range(n):
        for k in range(i + 2, n):
            j = np.arange(i + 1, k)
            a = (xs[j] - xs[i]) / (xs[k] - xs[i])
            lhs = a * vs[k] + (1 - a) * vs[i] - vs[j]
            r = lhs / (a * (1 - a) * (xs[k] - xs[i]) ** 2)
            best = min(best, float(r.min()))
    return best


def candidate_remainders(
    E: TabulatedConvexFn, x: float, y: float, phi_x, phi_y
) -> dict:
    """Both candidate remainders for the strengthened deficit bound under convexity of E.

    Returns a mapping with ``"dual"`` equal to ``phi_y(dist(y, dE(x)))``
    and ``"primal"`` equal to ``phi_x(dist(x, dE*(y)))``, where ``dE*(y)`` is the
    set of knots attaining ``max (x_i y - E(x_i))`` together with the segment
    between two such knots. Neither is asserted to be the intended one.
    """
    d_y = subgradient(E, x).distance(y)
    xs, vs = E.finite_part()
    vals = xs * y - vs
    top = vals.max()
    arg = xs[np.abs(vals - top) <= 1e-12 * max(1.0, abs(top))]
    lo, hi = float(arg.min()), float(arg.max())
    d_x = 0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi))
    return {"dual": float(phi_y(d_y)), "primal": float(phi_x(d_x))}


@dataclass(frozen=True, eq=False)
class RateFn:
    """Tabulated rate function on ``[0, T]``.

    The table must start at ``(0, 0)``, be finite and nonnegative, and have
    strictly increasing slopes. ``strict=False`` relaxes the last requirement
    to non-decreasing slopes, which is what infimal convolutions of the form
    used here produce.
    """

    underlying: TabulatedConvexFn
    strict: bool = True

    def __post_init__(self):
        f = self.underlying
        if not np.all(f.finite_mask):
            raise ValueError("rate function must be finite on [0, T]")
        if f.knots[0] != 0.0 or f.values[0] != 0.0:
            raise ValueError("rate function must satisfy Phi(0) = 0 at the first knot")
        if np.any(f.values < 0):
            raise ValueError("rate function must be nonnegative")
        s = f.slopes()
        if s.size and s[0] < 0:
            raise ValueError("rate function must be nondecreasing")
        if self.strict and s.size > 1 and np.any(np.diff(s) <= 0):
            raise NotConvex("rate function slopes must be strictly increasing")

    @classmethod
    def from_callable(cls, fn, T: float, num: int = 201, strict: bool = True) -> "RateFn":
        t = np.linspace(0.0, T, num)
        return cls(TabulatedConvexFn(t, np.asarray(fn(t), dtype=float)), strict)

    @property
    def knots(self) -> np.ndarray:
        return self.underlying.knots

    @property
    def values(self) -> np.ndarray:
        return self.underlying.values

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    def __call__(self, t):
        return self.underlying(t)


@dataclass(frozen=True, eq=False)
class MonotoneTable:
    """Nondecreasing tabulated function evaluated by linear interpolation."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape or np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing and match values")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be nondecreasing")
        object.__setattr__(self, "knots", x)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        return out if out.ndim else float(out)

    def is_strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0))


def _merge_collinear(t: np.ndarray, v: np.ndarray, s: np.ndarray):
    keep = np.ones(t.size, dtype=bool)
    keep[1:-1] = s[1:] != s[:-1]
    return t[keep], v[keep]


def rate_min(phi1: RateFn, phi2: RateFn) -> RateFn:
    """Integrate the pointwise minimum of the two slope sequences.

    Both tables are refined to the union of their knots first; knots at
    which the resulting slope does not change are dropped so that the output
    has strictly increasing slopes.
    """
    if phi1.T != phi2.T:
        raise DomainMismatch(f"domains [0, {phi1.T}] and [0, {phi2.T}] differ")
    t = np.union1d(phi1.knots, phi2.knots)
    dt = np.diff(t)
    s1 = np.diff(phi1(t)) / dt
    s2 = np.diff(phi2(t)) / dt
    s = np.minimum(s1, s2)
    v = np.concatenate(([0.0], np.cumsum(s * dt)))
    t, v = _merge_collinear(t, v, s)
    return RateFn(TabulatedConvexFn(t, v), strict=phi1.strict and phi2.strict)


def psi_from_phi(phi: RateFn, regular: bool = True) -> MonotoneTable:
    """Tabulate ``Psi(t) = Phi(t) / t``.

    At ``t = 0`` the value is the limit of ``Psi``. When ``regular`` is true
    the limit is taken to be 0, which is the regularity hypothesis under
    which the knots sample a function with ``Psi(0+) = 0``. Otherwise the
    limit of the piecewise-linear interpolant, its first slope, is used.
    """
    t, v = phi.knots, phi.values
    psi = np.empty_like(v)
    psi[1:] = v[1:] / t[1:]
    psi[0] = 0.0 if regular else (v[1] - v[0]) / (t[1] - t[0])
    return MonotoneTable(t, psi)


def inf_convolution_hat(psi: MonotoneTable) -> RateFn:
    """``Psi_hat(t) = inf_{0 <= s <= t} Psi(t - s) + s`` on the knots of ``Psi``.

    For a piecewise-linear ``Psi`` the infimum is attained with ``t - s`` at a
    knot, so ``Psi_hat(t_i) = t_i + min_{j <= i} (Psi(t_j) - t_j)``, a running
    minimum computed in one pass.

    Raises
    ------
    NotConvex
        If the result is not convex, which can happen only when ``Psi`` is
        itself not convex.
    """
    t, v = psi.knots, psi.values
    if t[0] != 0.0 or v[0] != 0.0:
        raise ValueError("Psi must satisfy Psi(0) = 0 at the first knot")
    if np.any(v < 0):
        raise ValueError("Psi must be nonnegative")
    hat = t + np.minimum.accumulate(v - t)
    tab = TabulatedConvexFn(t, hat)
    return RateFn(tab, strict=False)


def brute_force_inf_convolution(psi: MonotoneTable, t, s_grid) -> np.ndarray:
    """Reference ``min_s Psi(t - s) + s`` over explicit shifts ``s`` in ``[0, t]``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    s_grid = np.asarray(s_grid, dtype=float)
    for i, ti in enumerate(t):
        s = np.concatenate((s_grid[(s_grid >= 0) & (s_grid <= ti)], [0.0, ti]))
        out[i] = np.min(psi(ti - s) + s)
    return out


def write_csv(f: TabulatedConvexFn, path) -> None:
    """Two columns ``knot, value`` with the literal ``inf`` for ``+inf``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["knot", "value"])
        for x, v in zip(f.knots, f.values):
            w.writerow([repr(float(x)), "inf" if math.isinf(v) else repr(float(v))])


def read_csv(path) -> TabulatedConvexFn:
    """Inverse of :func:`write_csv`."""
    xs, vs = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            xs.append(float(row[0]))
            vs.append(math.inf if row[1].strip() == "inf" else float(row[1]))
    return TabulatedConvexFn(np.array(xs), np.array(vs))
