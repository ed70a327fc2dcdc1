"""Finitely supported Fourier fields on Z^d x Z^b and their algebra.

A field stores its coefficients densely on a box B(0, R) as an array of
shape ``(2R-1,) * (d+b)``; the entry at array index i sits at lattice
coordinate i - (R-1). Products are direct (non-FFT) convolutions, which keep
small coefficients accurate in a relative sense.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import signal

from .errors import ConfigurationError
from .lattice import Box, MultiIndex, ResonantSet, box_coords

REAL_TOL = 1e-12


def _as_vector(x) -> tuple:
    if isinstance(x, MultiIndex):
        return x.vector
    return tuple(int(v) for v in x)


class FourierField:
    """Coefficient map x -> f_hat(x) supported in a sup-norm box.

    Parameters
    ----------
    coeffs : ndarray
        Dense coefficients, shape ``(2R-1,) * (d+b)``. Real arrays stay real.
    d, b : int
        Spatial and frequency dimensions.
    """

    __slots__ = ("coeffs", "d", "b")

    def __init__(self, coeffs: np.ndarray, d: int, b: int):
        arr = np.asarray(coeffs)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        dim = d + b
        if arr.ndim != dim:
            raise ConfigurationError(f"coefficient array has {arr.ndim} axes, expected {dim}")
        if dim and (len(set(arr.shape)) != 1 or arr.shape[0] % 2 == 0):
            raise ConfigurationError(f"coefficient array must be an odd hypercube, got {arr.shape}")
        arr.setflags(write=False)
        self.coeffs = arr
        self.d = int(d)
        self.b = int(b)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, d: int, b: int, radius: int, dtype=np.float64) -> "FourierField":
        return cls(np.zeros((2 * radius - 1,) * (d + b), dtype=dtype), d, b)

    @classmethod
    def from_modes(cls, modes: Mapping, d: int, b: int, radius: int | None = None) -> "FourierField":
        """Build a field from ``{site: coefficient}`` (sites as MultiIndex or vectors)."""
        items = [(_as_vector(x), c) for x, c in modes.items()]
        need = 1 + max((max((abs(v) for v in x), default=0) for x, _ in items), default=0)
        radius = need if radius is None else int(radius)
        cplx = any(np.iscomplexobj(np.asarray(c)) and np.imag(c) != 0 for _, c in items)
        out = cls.zeros(d, b, radius, np.complex128 if cplx else np.float64).coeffs.copy()
        for x, c in items:
            if len(x) != d + b:
                raise ConfigurationError(f"site {x} has wrong length for d={d}, b={b}")
            if max((abs(v) for v in x), default=0) >= radius:
                continue
            out[tuple(v + radius - 1 for v in x)] += c if cplx else np.real(c)
        return cls(out, d, b)

    @classmethod
    def constant(cls, value, d: int, b: int, radius: int = 1) -> "FourierField":
        return cls.from_modes({(0,) * (d + b): value}, d, b, radius)

    def with_coeffs(self, coeffs: np.ndarray) -> "FourierField":
        return FourierField(coeffs, self.d, self.b)

    # geometry -------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.d + self.b

    @property
    def radius(self) -> int:
        return (self.coeffs.shape[0] + 1) // 2 if self.dim else 1

    @property
    def support_box(self) -> Box:
        return Box(self.radius)

    def coords(self) -> np.ndarray:
        return box_coords(self.radius, self.dim)

    def index_of(self, x) -> tuple | None:
        v = _as_vector(x)
        r = self.radius
        if max((abs(t) for t in v), default=0) >= r:
            return None
        return tuple(t + r - 1 for t in v)

    def __getitem__(self, x):
        idx = self.index_of(x)
        return 0.0 if idx is None else self.coeffs[idx]

    def as_dict(self, tol: float = 0.0) -> dict:
        """Nonzero coefficients as ``{MultiIndex: value}``, lexicographic order."""
        flat = self.coeffs.ravel()
        nz = np.flatnonzero(np.abs(flat) > tol)
        coords = self.coords()
        return {MultiIndex.from_vector(coords[i], self.d): flat[i] for i in nz}

    def embed(self, radius: int) -> "FourierField":
        """Zero-pad or crop to B(0, radius)."""
        radius = int(radius)
        r = self.radius
        if radius == r:
            return self
        if radius > r:
            pad = radius - r
            return self.with_coeffs(np.pad(self.coeffs, pad))
        cut = r - radius
        sl = (slice(cut, cut + 2 * radius - 1),) * self.dim
        return self.with_coeffs(self.coeffs[sl])

    def mass_outside(self, radius: int) -> float:
        """l1 mass of the coefficients outside B(0, radius)."""
        if radius >= self.radius:
            return 0.0
        total = float(np.sum(np.abs(self.coeffs)))
        return total - float(np.sum(np.abs(self.embed(radius).coeffs)))

    # reality ----------------------------------------------------------------
    def max_abs_imag(self) -> float:
        return float(np.max(np.abs(self.coeffs.imag), initial=0.0)) if np.iscomplexobj(self.coeffs) else 0.0

    @property
    def real_flag(self) -> bool:
        """True when max |Im| <= 1e-12 * max |coeff|."""
        scale = float(np.max(np.abs(self.coeffs), initial=0.0))
        return self.max_abs_imag() <= REAL_TOL * scale

    def real_part(self) -> "FourierField":
        return self.with_coeffs(np.real(self.coeffs))

    # arithmetic -------------------------------------------------------------
    def _aligned(self, other: "FourierField"):
        if (self.d, self.b) != (other.d, other.b):
            raise ConfigurationError("fields have different dimensions")
        r = max(self.radius, other.radius)
        return self.embed(r).coeffs, other.embed(r).coeffs

    def __add__(self, other: "FourierField") -> "FourierField":
        a, c = self._aligned(other)
        return self.with_coeffs(a + c)

    def __sub__(self, other: "FourierField") -> "FourierField":
        a, c = self._aligned(other)
        return self.with_coeffs(a - c)

    def __neg__(self) -> "FourierField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar) -> "FourierField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def l1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def allclose(self, other: "FourierField", atol: float = 0.0, rtol: float = 0.0) -> bool:
        a, c = self._aligned(other)
        return bool(np.all(np.abs(a - c) <= atol + rtol * np.abs(c)))

    def __repr__(self) -> str:
        return f"FourierField(d={self.d}, b={self.b}, radius={self.radius}, nnz={np.count_nonzero(self.coeffs)})"


def multiply_tracked(f: FourierField, g: FourierField, out_box: Box | int | None = None):
    """Convolution product and the l1 mass dropped by truncating to ``out_box``.

    Returns
    -------
    product : FourierField
    dropped : float
        l1 norm of the coefficients of the full product lying outside out_box.
    """
    if (f.d, f.b) != (g.d, g.b):
        raise ConfigurationError("fields have different dimensions")
    full = signal.convolve(f.coeffs, g.coeffs, mode="full", method="direct")
    prod = FourierField(full, f.d, f.b)
    if out_box is None:
        return prod, 0.0
    radius = out_box.radius if isinstance(out_box, Box) else int(out_box)
    dropped = prod.mass_outside(radius)
    return prod.embed(radius), dropped


def multiply(f: FourierField, g: FourierField, out_box: Box | int | None = None) -> FourierField:
    """(fg)^(x) = sum_y f_hat(x-y) g_hat(y), truncated to ``out_box``.

    With ``out_box=None`` the full product support is kept.
    """
    return multiply_tracked(f, g, out_box)[0]


def conjugate_field(f: FourierField) -> FourierField:
    """Fourier coefficients of the complex conjugate function: conj(f_hat(-x))."""
    flipped = np.flip(f.coeffs, axis=tuple(range(f.dim))) if f.dim else f.coeffs
    return f.with_coeffs(np.conj(flipped))


def theta_derivative(f: FourierField, lambda_prime: Sequence[float]) -> FourierField:
    """Multiply the coefficient at (n, k) by k . lambda'."""
    lam = np.asarray(lambda_prime, dtype=float)
    if lam.shape != (f.b,):
        raise ConfigurationError(f"lambda' must have length b={f.b}")
    kdot = f.coords()[:, f.d:] @ lam
    return f.with_coeffs(f.coeffs * kdot.reshape(f.coeffs.shape))


@dataclass(frozen=True)
class Multiplier:
    """Diagonal symbol n -> mu_n of the linear operator L = -Laplacian + V*."""

    eval: Callable[[tuple], float]
    description: str = ""
    _cache: dict = dc_field(default_factory=dict, compare=False, repr=False)

    def __call__(self, n) -> float:
        key = tuple(int(v) for v in n)
        val = self._cache.get(key)
        if val is None:
            val = float(self.eval(key))
            self._cache[key] = val
        return val

    def values(self, n_coords: np.ndarray) -> np.ndarray:
        """Evaluate on each row of an integer array of spatial modes."""
        uniq, inv = np.unique(n_coords, axis=0, return_inverse=True)
        vals = np.array([self(u) for u in uniq], dtype=float)
        return vals[np.asarray(inv).ravel()]


def nls_multiplier(lam: Sequence[float], R: ResonantSet) -> Multiplier:
    """mu_{n_j} = lambda_j on the resonant spatial modes, |n|^2 elsewhere."""
    lam = tuple(float(v) for v in lam)
    if len(lam) != R.b:
        raise ConfigurationError(f"lambda must have length b={R.b}")
    table = dict(zip(R.spatial_modes, lam))

    def mu(n):
        n = tuple(n)
        if n in table:
            return table[n]
        return float(sum(v * v for v in n))

    return Multiplier(mu, f"nls(lambda={lam})")


def apply_multiplier(f: FourierField, m: Multiplier) -> FourierField:
    """Multiply the coefficient at (n, k) by mu_n."""
    vals = m.values(f.coords()[:, : f.d]) if f.d else np.full(f.coeffs.size, m(()))
    return f.with_coeffs(f.coeffs * vals.reshape(f.coeffs.shape))


# serialization ----------------------------------------------------------------
def field_header(d: int, b: int) -> list:
    return [f"n{i + 1}" for i in range(d)] + [f"k{j + 1}" for j in range(b)] + ["re", "im"]


def dump_field(f: FourierField, stream=None, tol: float = 0.0) -> str | None:
    """Write nonzero coefficients as CSV rows ``n1..nd, k1..kb, re, im``.

    Rows follow the lexicographic site order. Returns the text when no
    stream is given.
    """
    own = stream is None
    out = io.StringIO() if own else stream
    w = csv.writer(out, lineterminator="\n")
    w.writerow(field_header(f.d, f.b))
    for x, c in f.as_dict(tol).items():
        c = complex(c)
        w.writerow(list(x.vector) + [repr(c.real), repr(c.imag)])
    return out.getvalue() if own else None


def load_field(stream_or_text, d: int, b: int, radius: int | None = None) -> FourierField:
    text = stream_or_text if isinstance(stream_or_text, str) else stream_or_text.read()
    rows = list(csv.reader(io.StringIO(text)))
    header = field_header(d, b)
    if not rows or rows[0] != header:
        raise ConfigurationError(f"field file header must be {header}")
    modes = {}
    for row in rows[1:]:
        if not row:
            continue
        x = tuple(int(v) for v in row[: d + b])
        modes[x] = complex(float(row[d + b]), float(row[d + b + 1]))
    f = FourierField.from_modes(modes, d, b, radius)
    return f.real_part() if f.max_abs_imag() == 0.0 else f
