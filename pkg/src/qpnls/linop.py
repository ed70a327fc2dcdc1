"""The duplicated linearized operator T = D - eps S on signed sites.

Site order: all (+, x) with x in B(0,N) \\ R in lexicographic order, followed
by all (-, x) with x in B(0,N) \\ (-R) in lexicographic order. Rows and
columns of every dense matrix follow this order.

Blocks of S (entries depend on x - x' only):

    (+,+): Hqqbar(x-x')      (+,-): Hqbarqbar(x-x')
    (-,+): Hqq(x-x')         (-,-): Hqqbar(x-x')
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SmallDivisorFailure
from .field import FourierField, Multiplier
from .gevrey import DecayFit, GevreyWeight, fit_decay_arrays
from .lattice import (
    Box,
    MultiIndex,
    ResonantSet,
    Sign,
    SignedSite,
    box_coords,
    resonant_mask,
)
from .nonlinearity import DEFAULT_BUDGET, PowerSeries, second_derivatives

DEFAULT_B_MAX = 1e8
DECAY_FIT_FLOOR = 1e-12


@dataclass(frozen=True)
class SiteIndex:
    """Restricted index set (P u P') n B(0, N) split by sign."""

    d: int
    b: int
    radius: int
    plus: np.ndarray
    minus: np.ndarray

    @classmethod
    def build(cls, box: Box | int, R: ResonantSet) -> "SiteIndex":
        N = box.radius if isinstance(box, Box) else int(box)
        coords = box_coords(N, R.d + R.b)
        plus = coords[~resonant_mask(coords, R)]
        minus = coords[~resonant_mask(coords, R, negate=True)]
        return cls(R.d, R.b, N, plus, minus)

    @property
    def size(self) -> int:
        return len(self.plus) + len(self.minus)

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.plus, self.minus], axis=0)

    @property
    def signs(self) -> np.ndarray:
        return np.concatenate([np.ones(len(self.plus), int), -np.ones(len(self.minus), int)])

    @property
    def sites(self) -> list:
        out = [SignedSite(Sign.PLUS, MultiIndex.from_vector(v, self.d)) for v in self.plus]
        out += [SignedSite(Sign.MINUS, MultiIndex.from_vector(v, self.d)) for v in self.minus]
        return out

    def position(self, site: SignedSite) -> int:
        block = self.plus if site.sign == Sign.PLUS else self.minus
        hit = np.flatnonzero(np.all(block == np.asarray(site.site.vector), axis=1))
        if hit.size == 0:
            raise KeyError(site)
        return int(hit[0]) + (0 if site.sign == Sign.PLUS else len(self.plus))


def assemble_D(box: Box | int, R: ResonantSet, lambda_prime: Sequence[float], mu: Multiplier):
    """Diagonal D(+,n,k) = k.lambda' - mu_n and D(-,n,k) = -k.lambda' - mu_{-n}.

    Returns
    -------
    index : SiteIndex
    diag : ndarray of float
    """
    index = SiteIndex.build(box, R)
    lam = np.asarray(lambda_prime, dtype=float)
    if lam.shape != (R.b,):
        raise ConfigurationError(f"lambda' must have length b={R.b}")
    d = R.d
    dp = index.plus[:, d:] @ lam - mu.values(index.plus[:, :d])
    dm = -(index.minus[:, d:] @ lam) - mu.values(-index.minus[:, :d])
    return index, np.concatenate([dp, dm])


def _toeplitz_block(symbol: FourierField, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Matrix [symbol(x_i - x'_j)] via flat offsets into the symbol array."""
    side = symbol.coeffs.shape[0] if symbol.dim else 1
    strides = side ** np.arange(symbol.dim - 1, -1, -1)
    center = (symbol.radius - 1) * int(np.sum(strides))
    pr = rows @ strides
    pc = cols @ strides
    flat = symbol.coeffs.ravel()
    return flat[pr[:, None] - pc[None, :] + center]


def assemble_S(symbols: Sequence[FourierField], index: SiteIndex) -> np.ndarray:
    """Dense S from (Hqqbar, Hqbarqbar, Hqq) following the four-block rule.

    Raises
    ------
    ConfigurationError
        If a symbol does not cover every difference x - x' of the box.
    """
    need = 2 * index.radius - 1
    names = ("Hqqbar", "Hqbarqbar", "Hqq")
    padded = []
    for name, s in zip(names, symbols):
        if s.radius < need:
            lo = s.radius
            hi = need - 1
            raise ConfigurationError(
                f"symbol {name} has radius {s.radius}; differences with sup-norm {lo}..{hi} are not covered"
            )
        padded.append(s)
    hqqbar, hqbarqbar, hqq = padded
    pp = _toeplitz_block(hqqbar, index.plus, index.plus)
    pm = _toeplitz_block(hqbarqbar, index.plus, index.minus)
    mp = _toeplitz_block(hqq, index.minus, index.plus)
    mm = _toeplitz_block(hqqbar, index.minus, index.minus)
    return np.block([[pp, pm], [mp, mm]])


@dataclass
class BlockOperator:
    """T = diag(D) - eps S over a SiteIndex; the dense matrix is built on demand."""

    index: SiteIndex
    diag: np.ndarray
    toeplitz_symbols: tuple
    epsilon: float
    _dense: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def sites(self) -> list:
        return self.index.sites

    @property
    def size(self) -> int:
        return self.index.size

    def dense(self) -> np.ndarray:
        if self._dense is None:
            if self.epsilon == 0.0:
                T = np.diag(self.diag).astype(float)
            else:
                S = assemble_S(self.toeplitz_symbols, self.index)
                T = -self.epsilon * S
                T[np.diag_indices_from(T)] += self.diag
            self._dense = T
        return self._dense

    @classmethod
    def from_matrix(cls, T: np.ndarray, index: SiteIndex) -> "BlockOperator":
        """Wrap an explicit matrix (diagonal taken from it, eps = 0 bookkeeping)."""
        op = cls(index, np.real(np.diag(T)).copy(), (), 0.0)
        op._dense = np.asarray(T)
        return op


def assemble_T(
    q: FourierField,
    f: PowerSeries,
    epsilon: float,
    box: Box | int,
    R: ResonantSet,
    lambda_prime: Sequence[float],
    mu: Multiplier,
    budget: float = DEFAULT_BUDGET,
) -> BlockOperator:
    """Linearized operator at q restricted to (P u P') n B(0, N)."""
    index, diag = assemble_D(box, R, lambda_prime, mu)
    need = 2 * index.radius - 1
    symbols = second_derivatives(q, f, out_box=need, budget=budget)
    return BlockOperator(index, diag, tuple(symbols), float(epsilon))


class SolveDiagnostics(NamedTuple):
    condition: float
    inv_norm_1: float
    backward_error: float


def _gather(field: FourierField, coords: np.ndarray) -> np.ndarray:
    r = field.radius
    out = np.zeros(len(coords), dtype=field.coeffs.dtype)
    inside = np.max(np.abs(coords), axis=1, initial=0) < r
    idx = tuple((coords[inside] + r - 1).T)
    out[inside] = field.coeffs[idx]
    return out


def _scatter(values: np.ndarray, coords: np.ndarray, d: int, b: int, radius: int) -> FourierField:
    arr = np.zeros((2 * radius - 1,) * (d + b), dtype=values.dtype)
    arr[tuple((coords + radius - 1).T)] = values
    return FourierField(arr, d, b)


def _factor(T: np.ndarray):
    if not np.all(np.isfinite(T)):
        raise SmallDivisorFailure("operator has non-finite entries")
    with warnings.catch_warnings():
        # exact singularity is reported below as a SmallDivisorFailure
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(T, check_finite=False)
    if np.any(np.diag(lu) == 0):
        raise SmallDivisorFailure("singular factorization", diagnostics={"condition": float("inf")})
    return lu, piv


def condition_estimate(T: np.ndarray, lu_piv=None) -> tuple:
    """(1-norm condition estimate, estimate of ||T^-1||_1) from LAPACK gecon."""
    lu, piv = lu_piv if lu_piv is not None else _factor(T)
    anorm = float(np.linalg.norm(T, 1))
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return float("inf"), float("inf")
    return 1.0 / rcond, 1.0 / (rcond * anorm)


def solve_homological(
    T: BlockOperator,
    rhs_plus: FourierField,
    rhs_minus: FourierField,
    B_max: float = DEFAULT_B_MAX,
):
    """Solve T (dq, dq_bar) = (rhs_plus, rhs_minus) by LU with partial pivoting.

    ``rhs_plus`` is read on the (+) sites and ``rhs_minus`` on the (-) sites.

    Returns
    -------
    dq, dq_bar : FourierField
        Solution blocks on B(0, N); dq vanishes on R, dq_bar on -R.
    diagnostics : SolveDiagnostics

    Raises
    ------
    SmallDivisorFailure
        If the factorization is singular or the condition estimate exceeds B_max.
    """
    idx = T.index
    M = T.dense()
    rhs = np.concatenate([_gather(rhs_plus, idx.plus), _gather(rhs_minus, idx.minus)])
    if np.iscomplexobj(rhs) and not np.iscomplexobj(M):
        if np.max(np.abs(rhs.imag), initial=0.0) == 0.0:
            rhs = rhs.real
    lu_piv = _factor(M)
    cond, inv1 = condition_estimate(M, lu_piv)
    if not cond <= B_max:
        raise SmallDivisorFailure(
            f"condition estimate {cond:.3e} exceeds B_max {B_max:.3e}",
            diagnostics={"condition": cond, "B_max": B_max},
        )
    sol = sla.lu_solve(lu_piv, rhs, check_finite=False)
    rnorm = float(np.linalg.norm(rhs))
    backward = float(np.linalg.norm(M @ sol - rhs)) / rnorm if rnorm > 0 else 0.0
    n_plus = len(idx.plus)
    dq = _scatter(sol[:n_plus], idx.plus, idx.d, idx.b, idx.radius)
    dq_bar = _scatter(sol[n_plus:], idx.minus, idx.d, idx.b, idx.radius)
    return dq, dq_bar, SolveDiagnostics(cond, inv1, backward)


def site_distance_weights(index: SiteIndex, alpha: float) -> np.ndarray:
    """|x - x'|_alpha between all pairs of sites, ignoring the sign label."""
    c = index.coords
    table = np.arange(2 * index.radius, dtype=float) ** (1.0 / alpha)
    out = np.zeros((len(c), len(c)))
    for t in range(c.shape[1]):
        out += table[np.abs(c[:, None, t] - c[None, :, t])]
    return out


def operator_norm_2(A: np.ndarray) -> float:
    """Largest singular value; Lanczos with a fixed start vector above 200 rows."""
    if min(A.shape) <= 200:
        return float(np.linalg.norm(A, 2))
    v0 = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    s = spla.svds(A, k=1, v0=v0, tol=1e-12, return_singular_vectors=False)
    return float(s[0])


def invert_with_decay_fit(T: BlockOperator, w: GevreyWeight, floor: float = DECAY_FIT_FLOOR, return_inverse: bool = False):
    """Dense inverse, its l2 operator norm and an exponential decay fit.

    Returns ``(norm, fit)`` or ``(norm, fit, inverse)``.

    Raises
    ------
    SmallDivisorFailure
        If T is singular.
    """
    M = T.dense()
    lu_piv = _factor(M)
    G = sla.lu_solve(lu_piv, np.eye(M.shape[0], dtype=M.dtype), check_finite=False)
    norm = operator_norm_2(G)
    fit = fit_decay_arrays(site_distance_weights(T.index, w.alpha), np.abs(G), w.alpha, floor)
    if return_inverse:
        return norm, fit, G
    return norm, fit


def dump_operator(T: BlockOperator, matrix_path, sites_path) -> None:
    """Write the dense matrix (.npy, row-major) and its site list (CSV)."""
    np.save(matrix_path, np.ascontiguousarray(T.dense()))
    idx = T.index
    with open(sites_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["row", "sign"] + [f"n{i + 1}" for i in range(idx.d)] + [f"k{j + 1}" for j in range(idx.b)])
        for row, (s, v) in enumerate(zip(idx.signs, idx.coords)):
            wr.writerow([row, "+" if s > 0 else "-"] + list(map(int, v)))
