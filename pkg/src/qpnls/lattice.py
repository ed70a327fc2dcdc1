"""Lattice sites (n, k) in Z^d x Z^b, truncation boxes and the resonant set.

Sites are ordered lexicographically over the concatenated vector (n..., k...)
with every component running from -(N-1) to N-1. This is the C order of a
dense array of shape ``(2N-1,) * (d+b)``, which is how fields are stored.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, SizeGuardError

MAX_DIM = 3
DEFAULT_SITE_CAP = 2_000_000


@dataclass(frozen=True, order=True)
class MultiIndex:
    """A lattice point x = (n, k) with spatial part n and frequency part k."""

    n: tuple
    k: tuple

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def b(self) -> int:
        return len(self.k)

    @property
    def vector(self) -> tuple:
        return self.n + self.k

    @classmethod
    def from_vector(cls, v: Sequence[int], d: int) -> "MultiIndex":
        v = tuple(int(t) for t in v)
        return cls(v[:d], v[d:])

    def __neg__(self) -> "MultiIndex":
        return MultiIndex(tuple(-v for v in self.n), tuple(-v for v in self.k))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(
            tuple(a + c for a, c in zip(self.n, other.n)),
            tuple(a + c for a, c in zip(self.k, other.k)),
        )

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        return self + (-other)

    def sup_norm(self) -> int:
        v = self.vector
        return max((abs(t) for t in v), default=0)


class Sign(enum.IntEnum):
    PLUS = 1
    MINUS = -1


@dataclass(frozen=True, order=True)
class SignedSite:
    """A site of the duplicated lattice used by the linearized operator."""

    sign: Sign
    site: MultiIndex

    def __post_init__(self):
        object.__setattr__(self, "sign", Sign(self.sign))


@dataclass(frozen=True)
class Box:
    """Sup-norm box B(0, N) = {x : |x|_inf < N}."""

    radius: int

    def __post_init__(self):
        if int(self.radius) < 1:
            raise ConfigurationError(f"box radius must be >= 1, got {self.radius}")
        object.__setattr__(self, "radius", int(self.radius))

    @property
    def side(self) -> int:
        return 2 * self.radius - 1

    def contains(self, x: MultiIndex) -> bool:
        return x.sup_norm() < self.radius

    def size(self, dim: int) -> int:
        return self.side**dim


def unit_vector(j: int, b: int) -> tuple:
    e = [0] * b
    e[j] = 1
    return tuple(e)


@dataclass(frozen=True)
class ResonantSet:
    """The b pinned sites (n_j, e_j).

    Parameters
    ----------
    spatial_modes : sequence of integer vectors
        The n_j, one per frequency direction; must be pairwise distinct.
    """

    spatial_modes: tuple

    def __post_init__(self):
        modes = tuple(tuple(int(v) for v in n) for n in self.spatial_modes)
        if not modes:
            raise ConfigurationError("resonant set needs at least one mode")
        if len({len(n) for n in modes}) != 1:
            raise ConfigurationError("resonant modes must share the spatial dimension d")
        if len(set(modes)) != len(modes):
            raise ConfigurationError(f"resonant spatial modes must be distinct: {modes}")
        object.__setattr__(self, "spatial_modes", modes)

    @property
    def b(self) -> int:
        return len(self.spatial_modes)

    @property
    def d(self) -> int:
        return len(self.spatial_modes[0])

    @property
    def modes(self) -> list:
        return [MultiIndex(n, unit_vector(j, self.b)) for j, n in enumerate(self.spatial_modes)]

    def __contains__(self, x: MultiIndex) -> bool:
        return x in set(self.modes)

    def contains_negative(self, x: MultiIndex) -> bool:
        return (-x) in set(self.modes)

    def vectors(self) -> np.ndarray:
        """Array of shape (b, d+b) with the resonant sites."""
        return np.array([m.vector for m in self.modes], dtype=np.int64)


class SiteClass(enum.Enum):
    Q = "Q"
    MINUS_Q = "MinusQ"
    P_AND_PPRIME = "P_and_Pprime"
    # Kept for completeness of the classification API. With the k-parts of R
    # being unit vectors, R and -R are disjoint, so these two never occur.
    P_ONLY = "P_only"
    PPRIME_ONLY = "Pprime_only"


class Region(enum.Enum):
    Q = "Q"
    P = "P"
    PPRIME = "Pprime"
    P_BOX = "P_box"
    PPRIME_BOX = "Pprime_box"


def alpha_index_weight(x: MultiIndex | Sequence[int], alpha: float) -> float:
    """|x|_alpha = sum_j |x_j|^(1/alpha) over all components of (n, k)."""
    if alpha <= 1:
        raise ConfigurationError(f"alpha must exceed 1, got {alpha}")
    v = x.vector if isinstance(x, MultiIndex) else x
    return float(np.sum(np.abs(np.asarray(v, dtype=float)) ** (1.0 / alpha)))


def alpha_weight_array(coords: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized |x|_alpha over the last axis of an integer array."""
    return np.sum(np.abs(coords).astype(float) ** (1.0 / alpha), axis=-1)


def check_box_size(N: int, dim: int, cap: int = DEFAULT_SITE_CAP) -> int:
    size = (2 * N - 1) ** dim
    if size > cap:
        raise SizeGuardError(f"box B(0,{N}) in dimension {dim} has {size} sites, cap is {cap}")
    return size


def box_coords(N: int, dim: int, cap: int = DEFAULT_SITE_CAP) -> np.ndarray:
    """Integer array (m, dim) of the sites of B(0, N) in lexicographic order."""
    if N < 1:
        raise ConfigurationError(f"box radius must be >= 1, got {N}")
    check_box_size(N, dim, cap)
    axes = [np.arange(-(N - 1), N)] * dim
    if dim == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1).astype(np.int64)


def enumerate_box(N: int, d: int, b: int, cap: int = DEFAULT_SITE_CAP) -> list:
    """All sites of B(0, N) as MultiIndex values, lexicographically ordered."""
    if N < 1:
        raise ConfigurationError(f"box radius must be >= 1, got {N}")
    check_box_size(N, d + b, cap)
    rng = range(-(N - 1), N)
    return [MultiIndex.from_vector(v, d) for v in itertools.product(rng, repeat=d + b)]


def classify_site(x: MultiIndex, R: ResonantSet) -> SiteClass:
    if x.d != R.d or x.b != R.b:
        raise ConfigurationError("site dimensions do not match the resonant set")
    in_r = x in R
    in_minus_r = R.contains_negative(x)
    if in_r:
        return SiteClass.Q
    if in_minus_r:
        return SiteClass.MINUS_Q
    return SiteClass.P_AND_PPRIME


def resonant_mask(coords: np.ndarray, R: ResonantSet, negate: bool = False) -> np.ndarray:
    """Boolean mask of rows of ``coords`` lying in R (or in -R if ``negate``)."""
    sites = R.vectors()
    if negate:
        sites = -sites
    return np.any(np.all(coords[:, None, :] == sites[None, :, :], axis=-1), axis=1)


def project_field(f, region: Region | str, R: ResonantSet, N: int | None = None):
    """Zero the coefficients of ``f`` outside ``region``.

    Regions: Q (the resonant set), P (complement of R), Pprime (complement
    of -R), and their intersections with B(0, N) ("P_box", "Pprime_box").
    """
    region = Region(region)
    coords = f.coords()
    if region is Region.Q:
        keep = resonant_mask(coords, R)
    elif region in (Region.P, Region.P_BOX):
        keep = ~resonant_mask(coords, R)
    else:
        keep = ~resonant_mask(coords, R, negate=True)
    if region in (Region.P_BOX, Region.PPRIME_BOX):
        if N is None:
            raise ConfigurationError(f"region {region.value} needs a box radius")
        keep &= np.max(np.abs(coords), axis=1, initial=0) < N
    out = np.where(keep, f.coeffs.ravel(), 0.0).reshape(f.coeffs.shape)
    return f.with_coeffs(out)


def sites_from_coords(coords: Iterable, d: int) -> list:
    return [MultiIndex.from_vector(v, d) for v in coords]
