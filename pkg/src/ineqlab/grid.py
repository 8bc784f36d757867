"""Uniform periodic grids, quadrature, L^p norms and spectral multipliers.

A :class:`GridSpec` describes the box ``[-L, L)^n`` sampled with ``N`` nodes
per side. A :class:`GridFunction` holds complex samples on such a grid. The
integral of a sampled function is approximated by the rectangle rule
``h^n * sum``, which is spectrally accurate for smooth periodic data.

Fractional powers of the Laplacian are Fourier multipliers ``|xi|^s`` on the
lattice ``xi = (pi / L) k``. The zero frequency needs a convention when
``s != 0``; see :class:`ZeroModePolicy`.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadExponent, NonFinite, SpecMismatch

__all__ = [
    "GridSpec",
    "GridFunction",
    "ZeroModePolicy",
    "FreqMultiplier",
    "lp_norm",
    "pairing",
    "frac_laplacian",
    "resample",
    "cell_average_power",
    "cube_average_power",
    "plancherel_norm2",
    "to_bytes",
    "from_bytes",
    "write_csv",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^n``.

    Parameters
    ----------
    dim : int
        Spatial dimension ``n`` (1, 2 or 3).
    half_width : float
        Half side length ``L`` of the box.
    points_per_side : int
        Number of nodes ``N`` per axis, a power of two with ``N >= 8``.
    """

    dim: int
    half_width: float
    points_per_side: int

    def __post_init__(self):
        n, L, N = self.dim, self.half_width, self.points_per_side
        if n not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {n}")
        if not (np.isfinite(L) and L > 0):
            raise ValueError(f"half_width must be positive, got {L}")
        if N < 8 or N & (N - 1):
            raise ValueError(f"points_per_side must be a power of two >= 8, got {N}")

    @property
    def spacing(self) -> float:
        """Node spacing ``h = 2L / N``."""
        return 2.0 * self.half_width / self.points_per_side

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_side,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_side**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def box_volume(self) -> float:
        return (2.0 * self.half_width) ** self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates ``-L + j h`` along one axis."""
        N = self.points_per_side
        return -self.half_width + self.spacing * np.arange(N)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        ax = self.axis()
        out = []
        for d in range(self.dim):
            shape = [1] * self.dim
            shape[d] = self.points_per_side
            out.append(ax.reshape(shape))
        return tuple(out)

    def freq_axis(self) -> np.ndarray:
        """Frequencies ``(pi / L) k`` in FFT order along one axis."""
        N = self.points_per_side
        k = np.fft.fftfreq(N, d=1.0 / N)
        return (math.pi / self.half_width) * k

    def freq_modulus(self) -> np.ndarray:
        """``|xi|`` on the full frequency lattice, in FFT order."""
        return _freq_modulus(self)

    def refined(self, factor: int) -> "GridSpec":
        """Same box with ``factor`` times more points per side."""
        return GridSpec(self.dim, self.half_width, self.points_per_side * factor)


@functools.lru_cache(maxsize=32)
def _freq_modulus(spec: GridSpec) -> np.ndarray:
    ax = spec.freq_axis()
    sq = np.zeros(spec.shape)
    for d in range(spec.dim):
        shape = [1] * spec.dim
        shape[d] = spec.points_per_side
        sq = sq + ax.reshape(shape) ** 2
    out = np.sqrt(sq)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples of a function on a :class:`GridSpec`.

    The values array is copied, cast to ``complex128`` and made read-only, so
    instances behave as immutable values. Arithmetic with scalars and other
    grid functions on the same grid is supported.
    """

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        if vals.size != self.spec.size:
            raise SpecMismatch(
                f"expected {self.spec.size} values for {self.spec}, got {vals.size}"
            )
        vals = vals.reshape(self.spec.shape)
        if not np.all(np.isfinite(vals)):
            raise NonFinite("grid function contains NaN or Inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` on the grid."""
        return cls(spec, np.broadcast_to(fn(*spec.coords()), spec.shape))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape))

    @property
    def flat(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.values.reshape(-1)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values)

    def conj(self) -> "GridFunction":
        return GridFunction(self.spec, np.conj(self.values))

    def _other(self, other):
        if isinstance(other, GridFunction):
            _check_same(self, other)
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.spec, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.spec, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.spec, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.spec, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.spec, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.spec, -self.values)


def _check_same(f: GridFunction, g: GridFunction) -> None:
    if f.spec != g.spec:
        raise SpecMismatch(f"grid mismatch: {f.spec} vs {g.spec}")


def _check_finite(f: GridFunction) -> None:
    # Values are validated at construction; this guards against subclasses
    # or object.__setattr__ tampering.
    if not np.all(np.isfinite(f.values)):
        raise NonFinite("grid function contains NaN or Inf")


def lp_norm(f: GridFunction, p: float) -> float:
    """Discrete ``L^p`` norm ``(h^n sum |f_i|^p)^(1/p)``; ``max |f_i|`` for ``p = inf``.

    The sum is rescaled by ``max |f|`` before powering, so large or tiny
    amplitudes neither overflow nor underflow, and it is accumulated with
    :func:`math.fsum`.
    """
    _check_finite(f)
    if not (p >= 1):
        raise BadExponent(f"p must be >= 1, got {p}")
    a = np.abs(f.values).reshape(-1)
    m = float(a.max()) if a.size else 0.0
    if m == 0.0:
        return 0.0
    if math.isinf(p):
        return m
    s = math.fsum(((a / m) ** p).tolist())
    return m * (f.spec.cell_volume * s) ** (1.0 / p)


def pairing(f: GridFunction, g: GridFunction) -> float:
    """Real bilinear pairing ``2 Re(h^n sum conj(f_i) g_i)``."""
    _check_same(f, g)
    prod = (np.conj(f.values) * g.values).real.reshape(-1)
    return 2.0 * f.spec.cell_volume * math.fsum(prod.tolist())


def plancherel_norm2(f: GridFunction) -> float:
    """Squared ``L^2`` norm computed from the discrete Fourier coefficients."""
    F = np.fft.fftn(f.values)
    return f.spec.cell_volume / f.spec.size * math.fsum((np.abs(F) ** 2).reshape(-1).tolist())


class ZeroModePolicy(enum.Enum):
    """Convention for the multiplier at the zero frequency.

    ``SET_ZERO``
        The zero mode is annihilated for every ``s != 0``.
    ``CELL_AVERAGE``
        For ``s < 0`` the weight is the average of ``|xi|^s`` over the
        fundamental frequency cell. For ``0 < s < n`` it is the reciprocal of
        the cell average of ``|xi|^(-s)``, so that the multipliers for ``s``
        and ``-s`` are exact inverses on every mode. For ``s >= n`` the
        average of ``|xi|^s`` itself is used.
    """

    CELL_AVERAGE = "cell_average"
    SET_ZERO = "set_zero"


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def cube_average_power(width: float, n: int, s: float) -> float:
    """Average of ``|x|^s`` over the cube ``[-width/2, width/2]^n``.

    Splitting the cube into ``2n`` pyramids with apex at the origin gives

        avg = (width/2)^s * n / (s + n) * int_{[0,1]^(n-1)} (1 + |w|^2)^(s/2) dw,

    and the smooth face integral is evaluated by 5-point Gauss-Legendre
    quadrature per axis. Requires ``s > -n``.
    """
    if not s > -n:
        raise BadExponent(f"cube average of |x|^s needs s > -n, got s={s}, n={n}")
    if n == 1:
        face = 1.0
    else:
        grids = np.meshgrid(*([_GAUSS_X] * (n - 1)), indexing="ij")
        weights = functools.reduce(np.multiply.outer, [_GAUSS_W] * (n - 1))
        r2 = sum(g**2 for g in grids)
        face = float(np.sum(weights * (1.0 + r2) ** (s / 2.0)))
    return (0.5 * width) ** s * n / (s + n) * face


def cell_average_power(spec: GridSpec, s: float) -> float:
    """Average of ``|xi|^s`` over the fundamental frequency cell of side ``pi / L``."""
    return cube_average_power(math.pi / spec.half_width, spec.dim, s)


@dataclass(frozen=True)
class FreqMultiplier:
    """The Fourier multiplier ``|xi|^s`` with a zero-mode convention."""

    spec: GridSpec
    exponent: float
    zero_mode_policy: ZeroModePolicy = ZeroModePolicy.CELL_AVERAGE

    def __post_init__(self):
        s, n = self.exponent, self.spec.dim
        if self.zero_mode_policy is ZeroModePolicy.CELL_AVERAGE and not s > -n:
            raise BadExponent(f"CellAverage policy requires s > -n, got s={s}, n={n}")

    def zero_weight(self) -> float:
        s, n = self.exponent, self.spec.dim
        if s == 0:
            return 1.0
        if self.zero_mode_policy is ZeroModePolicy.SET_ZERO:
            return 0.0
        if s < 0:
            return cell_average_power(self.spec, s)
        if s < n:
            return 1.0 / cell_average_power(self.spec, -s)
        return cell_average_power(self.spec, s)

    def weights(self) -> np.ndarray:
        """Multiplier values on the frequency lattice, in FFT order."""
        return _weights(self.spec, float(self.exponent), self.zero_mode_policy)


@functools.lru_cache(maxsize=64)
def _weights(spec: GridSpec, s: float, policy: ZeroModePolicy) -> np.ndarray:
    if s == 0:
        w = np.ones(spec.shape)
    else:
        xi = spec.freq_modulus()
        with np.errstate(divide="ignore"):
            w = np.where(xi > 0, xi, 1.0) ** s
        w[(0,) * spec.dim] = FreqMultiplier(spec, s, policy).zero_weight()
    w.setflags(write=False)
    return w


def frac_laplacian(
    f: GridFunction,
    s: float,
    policy: ZeroModePolicy = ZeroModePolicy.CELL_AVERAGE,
) -> GridFunction:
    """Apply ``|xi|^s`` in Fourier space, i.e. ``(-Delta)^(s/2)`` on the torus.

    Parameters
    ----------
    f : GridFunction
        Input samples.
    s : float
        Multiplier exponent; ``s = 2`` is ``-Delta``.
    policy : ZeroModePolicy
        Zero-frequency convention. ``CELL_AVERAGE`` requires ``s > -n``.
    """
    _check_finite(f)
    mult = FreqMultiplier(f.spec, s, policy)
    if s == 0:
        return f
    out = np.fft.ifftn(mult.weights() * np.fft.fftn(f.values))
    return GridFunction(f.spec, out)


def _resize_axis(F: np.ndarray, axis: int, new: int) -> np.ndarray:
    """Zero-pad or truncate FFT coefficients along one axis.

    The Nyquist coefficient is split evenly when padding and recombined when
    truncating, so padding followed by truncation is the identity.
    """
    old = F.shape[axis]
    if new == old:
        return F
    F = np.moveaxis(F, axis, 0)
    out_shape = (new,) + F.shape[1:]
    out = np.zeros(out_shape, dtype=np.complex128)
    if new > old:
        h = old // 2
        out[:h] = F[:h]
        out[new - h + 1 :] = F[h + 1 :]
        out[h] = 0.5 * F[h]
        out[new - h] = 0.5 * F[h]
    else:
        h = new // 2
        out[:h] = F[:h]
        out[h + 1 :] = F[old - h + 1 :]
        out[h] = F[h] + F[old - h]
    return np.moveaxis(out, 0, axis)


def resample(f: GridFunction, target: GridSpec) -> GridFunction:
    """Spectral interpolation onto a finer or coarser grid on the same box."""
    src = f.spec
    if target == src:
        return f
    if target.dim != src.dim or target.half_width != src.half_width:
        raise SpecMismatch(f"cannot resample {src} onto {target}")
    ratio = max(target.points_per_side, src.points_per_side) // min(
        target.points_per_side, src.points_per_side
    )
    if ratio & (ratio - 1):
        raise SpecMismatch("resampling factor must be a power of two")
    F = np.fft.fftn(f.values)
    for ax in range(src.dim):
        F = _resize_axis(F, ax, target.points_per_side)
    scale = (target.points_per_side / src.points_per_side) ** src.dim
    return GridFunction(target, scale * np.fft.ifftn(F))


_HEADER = struct.Struct("<IId")


def to_bytes(f: GridFunction) -> bytes:
    """Binary layout: ``u32 dim, u32 N, f64 L`` then little-endian ``(re, im)`` pairs."""
    head = _HEADER.pack(f.spec.dim, f.spec.points_per_side, f.spec.half_width)
    body = np.ascontiguousarray(f.flat, dtype="<c16").tobytes()
    return head + body


def from_bytes(buf: bytes) -> GridFunction:
    """Inverse of :func:`to_bytes`."""
    dim, N, L = _HEADER.unpack_from(buf, 0)
    spec = GridSpec(dim, L, N)
    body = np.frombuffer(buf, dtype="<c16", offset=_HEADER.size)
    if body.size != spec.size:
        raise SpecMismatch(f"payload holds {body.size} values, header expects {spec.size}")
    return GridFunction(spec, body.astype(np.complex128))


def write_csv(f: GridFunction, path) -> None:
    """CSV export with one row per node: index tuple, real part, imaginary part."""
    names = [f"i{d}" for d in range(f.spec.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["re", "im"])
        for idx in np.ndindex(*f.spec.shape):
            v = f.values[idx]
            w.writerow(list(idx) + [repr(float(v.real)), repr(float(v.imag))])
