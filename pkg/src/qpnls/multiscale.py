"""Checks of the matrix machinery behind the Green-function estimates.

Each routine takes explicit matrices (or builds small synthetic ones) and
measures both sides of an inequality, so the statements can be exercised on
random instances: the resolvent identity, stability of a decaying inverse
under a decaying perturbation, the Neumann bound, Taylor truncation of
parameter polynomials, the Markov gradient bound, the arithmetic cluster
partition of Z^d, and a good/bad region coupling experiment.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigurationError, SizeGuardError
from .field import FourierField
from .gevrey import DecayFit, GevreyWeight, f_norm, fit_decay_arrays
from .lattice import alpha_weight_array, box_coords

SINGULAR_COND = 1e14
MAX_PARTITION_SITES = 8000


# ---------------------------------------------------------------- regions


@dataclass(frozen=True)
class IndexRegion:
    """A set of row/column indices into an ambient square matrix."""

    indices: tuple
    ambient: int

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if idx and (idx[0] < 0 or idx[-1] >= self.ambient):
            raise ConfigurationError(f"region indices must lie in [0, {self.ambient})")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


def _region(r, n: int, name: str) -> IndexRegion:
    if isinstance(r, IndexRegion):
        if r.ambient != n:
            raise ConfigurationError(f"region {name} declared for size {r.ambient}, matrix has size {n}")
        return r
    return IndexRegion(tuple(r), n)


def restricted_inverse(T: np.ndarray, region: IndexRegion, name: str = "region") -> np.ndarray:
    """G_region embedded in the ambient index space (zero outside)."""
    n = T.shape[0]
    G = np.zeros((n, n), dtype=np.result_type(T.dtype, float))
    idx = region.array
    if idx.size == 0:
        return G
    block = T[np.ix_(idx, idx)]
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise np.linalg.LinAlgError(f"restriction of T to {name} is singular (condition {cond:.3g})")
    G[np.ix_(idx, idx)] = np.linalg.inv(block)
    return G


def _restriction(T: np.ndarray, region: IndexRegion) -> np.ndarray:
    out = np.zeros_like(T)
    idx = region.array
    out[np.ix_(idx, idx)] = T[np.ix_(idx, idx)]
    return out


def resolvent_residual(T: np.ndarray, L1, L2) -> float:
    """Max-norm defect of G = (G1 + G2) - (G1 + G2)(T - T1 - T2) G on L1 u L2.

    ``L1`` and ``L2`` are disjoint index regions; their union is the region
    on which G is the restricted inverse.

    Raises
    ------
    numpy.linalg.LinAlgError
        If one of the three restrictions is singular; the message names it.
    """
    T = np.asarray(T)
    n = T.shape[0]
    r1, r2 = _region(L1, n, "L1"), _region(L2, n, "L2")
    if set(r1.indices) & set(r2.indices):
        raise ConfigurationError("L1 and L2 must be disjoint")
    lam = IndexRegion(r1.indices + r2.indices, n)
    G = restricted_inverse(T, lam, "L1 u L2")
    G12 = restricted_inverse(T, r1, "L1") + restricted_inverse(T, r2, "L2")
    coupling = _restriction(T, lam) - _restriction(T, r1) - _restriction(T, r2)
    defect = G - (G12 - G12 @ coupling @ G)
    return float(np.max(np.abs(defect))) if defect.size else 0.0


def resolvent_scale(T: np.ndarray, L1, L2) -> float:
    """(||G1|| + ||G2||) ||T|| ||G||, the natural size of the identity's terms."""
    T = np.asarray(T)
    n = T.shape[0]
    r1, r2 = _region(L1, n, "L1"), _region(L2, n, "L2")
    lam = IndexRegion(r1.indices + r2.indices, n)
    g = np.linalg.norm(restricted_inverse(T, lam, "L1 u L2"), 2)
    g1 = np.linalg.norm(restricted_inverse(T, r1, "L1"), 2)
    g2 = np.linalg.norm(restricted_inverse(T, r2, "L2"), 2)
    t = np.linalg.norm(_restriction(T, lam), 2)
    return float((g1 + g2) * t * g)


# ------------------------------------------------------- perturbation lemma


@dataclass
class PerturbationReport:
    """Outcome of a stability check for a decaying inverse.

    ``status`` is one of "hypotheses unmet", "conclusions hold",
    "conclusion violated". Margins are ratios bound / measured, so values
    above 1 mean the inequality holds.
    """

    status: str
    unmet: list
    smallness: float
    rho: float
    inv_norm: float
    inv_norm_prime: float
    norm_margin: float
    decay_margin: float
    hypothesis_decay_margin: float
    difference_margin: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair_weights(coords: np.ndarray, alpha: float):
    diff = coords[:, None, :] - coords[None, :, :]
    sup = np.max(np.abs(diff), axis=-1) if coords.shape[1] else np.zeros(diff.shape[:2])
    wts = np.sum(np.abs(diff) ** (1.0 / alpha), axis=-1)
    return sup, wts


def _min_ratio(bound: np.ndarray, value: np.ndarray) -> float:
    if bound.size == 0:
        return math.inf
    value = np.abs(value)
    with np.errstate(divide="ignore"):
        r = np.where(value > 0, bound / np.where(value > 0, value, 1.0), np.inf)
    return float(np.min(r))


def perturbation_check(
    T: np.ndarray,
    T_prime: np.ndarray,
    sites: np.ndarray,
    B: float,
    D_radius: float,
    L: float,
    eta: float,
    alpha: float,
    N: int | None = None,
    rho: float = 1e-2,
) -> PerturbationReport:
    """Stability of ||T^-1|| < B and off-diagonal decay under T -> T'.

    Hypotheses (checked on the inputs): ||T^-1|| < B, |T^-1(x, x')| <
    exp(-alpha L |x - x'|_alpha) for |x - x'| > D, |T' - T| < eta exp(-alpha L
    |x - x'|_alpha) entrywise, and eta N^C5 B^2 e^D <= rho with C5 = 2 dim + 1.
    Conclusions: ||T'^-1|| < 2B and |T'^-1| < 2 exp(-alpha L |x - x'|_alpha)
    beyond D.

    ``sites`` holds one lattice coordinate row per matrix index; distances
    use the sup norm for the D cut and |.|_alpha in the exponent. ``N``
    defaults to one more than the largest sup-norm coordinate.
    """
    T = np.asarray(T)
    Tp = np.asarray(T_prime)
    coords = np.asarray(sites, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[0] != T.shape[0] or T.shape != Tp.shape:
        raise ConfigurationError("T, T_prime and sites must describe the same index set")
    dim = coords.shape[1]
    if N is None:
        N = int(np.max(np.abs(coords))) + 1 if coords.size else 1
    C5 = 2 * dim + 1
    smallness = eta * float(N) ** C5 * B**2 * math.exp(D_radius)
    sup, wts = _pair_weights(coords, alpha)
    env = np.exp(-alpha * L * wts)
    far = sup > D_radius

    G = np.linalg.inv(T)
    inv_norm = float(np.linalg.norm(G, 2))
    hyp_decay = _min_ratio(env[far], G[far])
    diff_margin = _min_ratio(eta * env, Tp - T)

    unmet = []
    if not inv_norm < B:
        unmet.append(f"||T^-1|| = {inv_norm:.6g} is not below B = {B:.6g}")
    if not hyp_decay > 1:
        unmet.append("T^-1 exceeds exp(-alpha L |x-x'|_alpha) beyond D")
    if not diff_margin > 1:
        unmet.append("|T' - T| exceeds eta exp(-alpha L |x-x'|_alpha)")
    if not smallness <= rho:
        unmet.append(f"eta N^C5 B^2 e^D = {smallness:.6g} exceeds {rho:.3g}")

    if unmet:
        return PerturbationReport(
            "hypotheses unmet", unmet, smallness, rho, inv_norm, math.nan, math.nan, math.nan, hyp_decay, diff_margin
        )
    Gp = np.linalg.inv(Tp)
    inv_norm_p = float(np.linalg.norm(Gp, 2))
    norm_margin = 2 * B / inv_norm_p
    decay_margin = _min_ratio(2 * env[far], Gp[far])
    ok = norm_margin > 1 and decay_margin > 1
    return PerturbationReport(
        "conclusions hold" if ok else "conclusion violated",
        [],
        smallness,
        rho,
        inv_norm,
        inv_norm_p,
        norm_margin,
        decay_margin,
        hyp_decay,
        diff_margin,
    )


# ---------------------------------------------------------- Neumann bound


@dataclass(frozen=True)
class NeumannReport:
    """||T^-1|| versus 2 ||D^-1|| for T = D - eps S.

    ``applicable`` is True when ||eps S D^-1|| <= 1/2; ``holds`` is only
    meaningful then. ``series_bound`` is ||D^-1|| / (1 - ratio) when the
    series converges.
    """

    applicable: bool
    holds: bool
    lhs: float
    rhs: float
    ratio: float
    series_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def neumann_bound(D_diag: np.ndarray, S: np.ndarray, epsilon: float) -> NeumannReport:
    """Compare ||(D - eps S)^-1|| with 2 ||D^-1|| (spectral norms, dense).

    Raises
    ------
    ConfigurationError
        If D has a zero entry.
    """
    D_diag = np.asarray(D_diag)
    S = np.asarray(S)
    if np.any(D_diag == 0):
        raise ConfigurationError("D must be invertible")
    Dinv = 1.0 / D_diag
    ratio = float(np.linalg.norm(epsilon * S * Dinv[None, :], 2)) if S.size else 0.0
    d_norm = float(np.max(np.abs(Dinv))) if Dinv.size else 0.0
    rhs = 2.0 * d_norm
    series = d_norm / (1.0 - ratio) if ratio < 1 else math.inf
    if ratio >= 1:
        return NeumannReport(False, False, math.nan, rhs, ratio, series)
    T = np.diag(D_diag) - epsilon * S
    lhs = float(np.linalg.norm(np.linalg.inv(T), 2)) if T.size else 0.0
    applicable = ratio <= 0.5
    return NeumannReport(applicable, applicable and lhs < rhs, lhs, rhs, ratio, series)


# ------------------------------------------------- parameter polynomials


@dataclass(frozen=True)
class ParamPolynomial:
    """Real polynomial sum_e c_e x^e in ``nvars`` variables.

    ``terms`` maps exponent tuples to coefficients; the total degree may
    not exceed ``degree_cap``.
    """

    nvars: int
    terms: Mapping
    degree_cap: int = 64

    def __post_init__(self):
        clean = {}
        for e, c in dict(self.terms).items():
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars or any(v < 0 for v in e):
                raise ConfigurationError(f"bad exponent {e} for {self.nvars} variables")
            c = float(c)
            if c != 0.0:
                clean[e] = clean.get(e, 0.0) + c
        object.__setattr__(self, "terms", clean)
        if self.degree > self.degree_cap:
            raise ConfigurationError(f"degree {self.degree} exceeds cap {self.degree_cap}")

    @classmethod
    def from_coefficients_1d(cls, coeffs: Sequence[float], degree_cap: int = 64) -> "ParamPolynomial":
        return cls(1, {(j,): c for j, c in enumerate(coeffs)}, degree_cap)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x2 = x.reshape(-1, self.nvars)
        out = np.zeros(x2.shape[0])
        if self.terms:
            top = max(max(e) for e in self.terms)
            pows = x2[:, :, None] ** np.arange(top + 1)  # (points, var, power)
            for e, c in self.terms.items():
                term = pows[:, 0, e[0]] * c
                for j in range(1, self.nvars):
                    if e[j]:
                        term = term * pows[:, j, e[j]]
                out += term
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0] if x.ndim == 1 else out

    def derivative(self, var: int, order: int = 1) -> "ParamPolynomial":
        out = {}
        for e, c in self.terms.items():
            if e[var] >= order:
                e2 = list(e)
                e2[var] -= order
                out[tuple(e2)] = c * math.perm(e[var], order)
        return ParamPolynomial(self.nvars, out, self.degree_cap)

    def gradient(self, x) -> np.ndarray:
        """Gradient at points ``x`` (shape (..., nvars)), last axis the variable."""
        return np.stack([self.derivative(j)(x) for j in range(self.nvars)], axis=-1)

    def shifted(self, center: Sequence[float]) -> "ParamPolynomial":
        """q(y) = p(center + y), exact binomial expansion."""
        center = [float(v) for v in center]
        out: dict = {}
        for e, c in self.terms.items():
            for sub in itertools.product(*(range(v + 1) for v in e)):
                coef = c
                for ej, sj, cj in zip(e, sub, center):
                    coef *= math.comb(ej, sj) * cj ** (ej - sj)
                out[sub] = out.get(sub, 0.0) + coef
        return ParamPolynomial(self.nvars, out, self.degree_cap)

    def truncated(self, p: int) -> "ParamPolynomial":
        return ParamPolynomial(self.nvars, {e: c for e, c in self.terms.items() if sum(e) <= p}, self.degree_cap)

    def sup_upper(self, lows: Sequence[float], highs: Sequence[float]) -> float:
        """sum |c_e| prod max(|lo|, |hi|)^e, an upper bound for sup over the box."""
        m = np.maximum(np.abs(np.asarray(lows, float)), np.abs(np.asarray(highs, float)))
        return float(sum(abs(c) * np.prod(m ** np.asarray(e)) for e, c in self.terms.items()))


@dataclass(frozen=True)
class FieldPolynomial:
    """phi(lambda) = sum_x c_x(lambda) e^{i x . theta} with polynomial c_x.

    ``terms`` maps lattice coordinate tuples (length d + b) to real
    ParamPolynomial coefficients in ``nvars`` parameters.
    """

    d: int
    b: int
    nvars: int
    terms: Mapping

    def __post_init__(self):
        t = {tuple(int(v) for v in x): p for x, p in dict(self.terms).items()}
        for x, p in t.items():
            if len(x) != self.d + self.b or p.nvars != self.nvars:
                raise ConfigurationError("field polynomial terms have inconsistent dimensions")
        object.__setattr__(self, "terms", t)

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.terms.values()), default=0)

    def at(self, lam: Sequence[float]) -> FourierField:
        lam = np.asarray(lam, dtype=float)
        return FourierField.from_modes({x: float(p(lam)) for x, p in self.terms.items()}, self.d, self.b)

    def map(self, fn) -> "FieldPolynomial":
        return FieldPolynomial(self.d, self.b, self.nvars, {x: fn(p) for x, p in self.terms.items()})


def mixed_norm_upper(
    phi: FieldPolynomial, lows: Sequence[float], highs: Sequence[float], alpha: float, L1: float, L2: float
) -> float:
    """Upper bound on sum_k (L1^|k| / k!)^alpha sup_lambda ||d^k phi(lambda)||_F.

    The inner norm is the weighted l1 norm with weight exp(alpha L2 |x|_alpha),
    and the sup over the parameter box is bounded coefficientwise.
    """
    total = 0.0
    deg = phi.degree
    for x, p in phi.terms.items():
        wx = math.exp(alpha * L2 * float(np.sum(np.abs(np.asarray(x, float)) ** (1.0 / alpha))))
        for k in itertools.product(range(deg + 1), repeat=phi.nvars):
            if sum(k) > p.degree:
                continue
            q = p
            for j, kj in enumerate(k):
                if kj:
                    q = q.derivative(j, kj)
            if not q.terms:
                continue
            fact = float(np.prod([math.factorial(v) for v in k]))
            total += (L1 ** sum(k) / fact) ** alpha * wx * q.sup_upper(lows, highs)
    return total


@dataclass
class TaylorReport:
    truncation: FieldPolynomial
    norm: float
    max_remainder: float
    max_bound: float
    violations: int
    samples: int


def _box_grid(lows, highs, per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(lows, highs)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def taylor_remainder(
    phi: FieldPolynomial,
    center: Sequence[float],
    p: int,
    radius: Sequence[float] | float,
    weights: tuple,
    alpha: float = 2.0,
    per_dim: int = 9,
) -> TaylorReport:
    """Degree-p Taylor truncation at ``center`` and its remainder bound.

    On the box center +- radius the remainder is measured at grid points in
    the F-norm of width L2 and compared with

        ||phi|| (p+1)!^(alpha-1) L1^(-(p+1) alpha) |dlambda|_1^(p+1),

    where ||phi|| is the mixed (alpha, L1, L2) norm over the box. The
    returned truncation is expressed in the shifted variable dlambda.
    """
    L1, L2 = weights
    center = np.asarray(center, dtype=float)
    rad = np.broadcast_to(np.asarray(radius, dtype=float), center.shape)
    lows, highs = center - rad, center + rad
    trunc = phi.map(lambda q: q.shifted(center).truncated(p))
    norm = mixed_norm_upper(phi, lows, highs, alpha, L1, L2)
    w = GevreyWeight(alpha, L2)
    pts = _box_grid(lows, highs, per_dim)
    worst_r, worst_b, bad = 0.0, 0.0, 0
    for lam in pts:
        dl = lam - center
        exact, approx = phi.at(lam), trunc.at(dl)
        rem = f_norm(exact - approx, w)
        bound = norm * math.factorial(p + 1) ** (alpha - 1) * L1 ** (-(p + 1) * alpha) * np.sum(np.abs(dl)) ** (p + 1)
        worst_r, worst_b = max(worst_r, rem), max(worst_b, bound)
        # cancellation in exact - approx leaves rounding of the size of the operands
        slack = 1e-12 * (bound + f_norm(exact, w) + f_norm(approx, w))
        if rem > bound + slack:
            bad += 1
    return TaylorReport(trunc, norm, worst_r, worst_b, bad, len(pts))


@dataclass(frozen=True)
class MarkovReport:
    bound: float
    measured_sup_grad: float
    sup_p: float
    omega: float
    holds: bool


MARKOV_GRID_POINTS = 200_000


def markov_bound(p: ParamPolynomial, lows: Sequence[float], highs: Sequence[float], per_dim: int | None = None) -> MarkovReport:
    """Gradient bound ||grad p|| <= 4 k^2 / omega ||p|| on an axis-aligned box.

    omega is the shortest side, k the total degree. Both sups are taken on
    a uniform grid that includes the corners.
    """
    lows = np.asarray(lows, dtype=float)
    highs = np.asarray(highs, dtype=float)
    if lows.shape != (p.nvars,) or highs.shape != (p.nvars,):
        raise ConfigurationError("box dimension must match the polynomial")
    if not np.all(highs > lows):
        raise ConfigurationError("box must be nondegenerate")
    if per_dim is None:
        per_dim = max(3, int(MARKOV_GRID_POINTS ** (1.0 / p.nvars)))
    pts = _box_grid(lows, highs, per_dim)
    sup_p = float(np.max(np.abs(p(pts))))
    grad = p.gradient(pts)
    measured = float(np.max(np.linalg.norm(grad, axis=-1)))
    omega = float(np.min(highs - lows))
    k = p.degree
    bound = 4.0 * k**2 / omega * sup_p
    return MarkovReport(bound, measured, sup_p, omega, measured <= bound * (1 + 1e-12))


# --------------------------------------------------------- cluster partition


@dataclass
class PartitionReport:
    B: int
    radius: int
    d: int
    clusters: list
    separation: float
    separated: bool
    max_diameter: int
    C0: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["clusters"] = [[list(map(int, s)) for s in c] for c in self.clusters]
        return out


def arithmetic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """|n - n'| + | |n|^2 - |n'|^2 | with the sup norm for |n - n'|."""
    diff = np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=-1)
    sa = np.sum(a * a, axis=-1)
    sb = np.sum(b * b, axis=-1)
    return diff + np.abs(sa[:, None] - sb[None, :])


def arithmetic_partition(B: int, box_radius: int, d: int) -> PartitionReport:
    """Connected components of n ~ n' iff |n - n'| + | |n|^2 - |n'|^2 | <= B.

    Sites are the integer points of [-box_radius, box_radius]^d. Distinct
    clusters are separated by more than B by construction; the report
    re-checks this and fits C0 = log(max diameter) / log B.
    """
    if B < 0 or box_radius < 0 or d < 1:
        raise ConfigurationError("need B >= 0, box_radius >= 0, d >= 1")
    n_sites = (2 * box_radius + 1) ** d
    if n_sites > MAX_PARTITION_SITES:
        raise SizeGuardError(f"partition box has {n_sites} sites, cap is {MAX_PARTITION_SITES}")
    coords = box_coords(box_radius + 1, d)
    dist = arithmetic_distance(coords, coords)
    adj = csr_matrix(dist <= B)
    n_comp, labels = connected_components(adj, directed=False)
    clusters = [coords[labels == c] for c in range(n_comp)]
    clusters.sort(key=lambda c: tuple(c[0]))
    same = labels[:, None] == labels[None, :]
    cross = dist[~same]
    separation = float(cross.min()) if cross.size else math.inf
    diam = max(int(np.max(np.abs(c[:, None, :] - c[None, :, :]))) if len(c) > 1 else 0 for c in clusters)
    C0 = math.log(diam) / math.log(B) if diam > 0 and B > 1 else (0.0 if diam == 0 else math.inf)
    return PartitionReport(
        B, box_radius, d, [[tuple(int(v) for v in s) for s in c] for c in clusters], separation, separation > B, diam, C0
    )


def fit_partition_exponent(Bs: Sequence[int], box_radius: int, d: int) -> tuple:
    """Least-squares slope of log(max diameter) against log B, and the reports."""
    reps = [arithmetic_partition(B, box_radius, d) for B in Bs]
    pts = [(math.log(r.B), math.log(r.max_diameter)) for r in reps if r.B > 1 and r.max_diameter > 0]
    if len(pts) < 2:
        return math.nan, reps
    x, y = np.array(pts).T
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, reps


# ------------------------------------------------------ coupling experiment


@dataclass(frozen=True)
class CouplingSpec:
    """Toy-scale layout for the good/bad region coupling experiment.

    Exponents follow the constraints 0 < theta4 < theta3 < theta2 < theta1 <
    theta < 1, theta4 / theta3 < c < (theta - theta1 - slack) / (1 - theta3),
    kappa < c, iota < c and log log M1 <= iota log M0.
    """

    M0: int = 3
    M1: int = 12
    d: int = 1
    b: int = 1
    alpha: float = 1.1
    L: float = 0.3
    theta: float = 0.99
    theta1: float = 0.55
    theta2: float = 0.52
    theta3: float = 0.5
    theta4: float = 0.3
    c: float = 0.85
    kappa: float = 0.8
    iota: float = 0.84
    slack: float = 0.01
    cluster_size: int = 2
    cluster_strength: float = 0.8
    diag_low: float = 20.0
    diag_high: float = 40.0
    noise: float = 1.0
    loss_fraction: float = 0.2
    min_distance: int = 1

    def violated_constraints(self) -> list:
        out = []
        chain = [("0", 0.0), ("theta4", self.theta4), ("theta3", self.theta3), ("theta2", self.theta2),
                 ("theta1", self.theta1), ("theta", self.theta), ("1", 1.0)]
        for (na, a), (nb, b) in zip(chain, chain[1:]):
            if not a < b:
                out.append(f"{na} < {nb} fails ({a} >= {b})")
        if not self.c > self.theta4 / self.theta3:
            out.append(f"c > theta4/theta3 fails ({self.c} <= {self.theta4 / self.theta3:.6g})")
        upper = (self.theta - self.theta1 - self.slack) / (1 - self.theta3)
        if not self.c < upper:
            out.append(f"c < (theta - theta1 - slack)/(1 - theta3) fails ({self.c} >= {upper:.6g})")
        if not self.kappa < self.c:
            out.append(f"kappa < c fails ({self.kappa} >= {self.c})")
        if not self.iota < self.c:
            out.append(f"iota < c fails ({self.iota} >= {self.c})")
        if self.M0 < 2 or self.M1 < 3:
            out.append("need M0 >= 2 and M1 >= 3 for the logarithmic scale condition")
        elif not math.log(math.log(self.M1)) <= self.iota * math.log(self.M0):
            out.append(
                f"log log M1 <= iota log M0 fails ({math.log(math.log(self.M1)):.6g} > {self.iota * math.log(self.M0):.6g})"
            )
        if self.M1 <= self.M0:
            out.append("M0 < M1 fails")
        if self.cluster_size > 0 and not self.cluster_size - 1 < self.M1**self.theta1:
            out.append(f"cluster diameter {self.cluster_size - 1} < M1^theta1 = {self.M1**self.theta1:.6g} fails")
        if self.cluster_size > 0 and not self.cluster_strength < 1:
            out.append("cluster_strength < 1 fails (cluster Green function would exceed exp(M1^theta4))")
        if not 0 < self.loss_fraction < 1:
            out.append("0 < loss_fraction < 1 fails")
        if not self.alpha > 1 or not self.L > 0:
            out.append("alpha > 1 and L > 0 required")
        return out

    @property
    def delta(self) -> float:
        """Rate loss M0^(max(iota, kappa, theta c) - c) appearing in the conclusion."""
        return self.M0 ** (max(self.iota, self.kappa, self.theta * self.c) - self.c)


@dataclass
class CouplingReport:
    seed: int
    green_norm: float
    norm_bound: float
    fitted_L: float
    planted_L: float
    passed: bool
    cluster: list
    neighborhood_size: int
    cluster_green_norm: float
    cluster_norm_bound: float
    good_norm_max: float
    good_norm_bound: float
    good_decay_margin: float
    hypotheses_met: bool
    lemma_rate: float
    pairs_fitted: int

    def to_dict(self) -> dict:
        return asdict(self)


def _envelope_rate(wts: np.ndarray, mags: np.ndarray) -> DecayFit:
    """Decay rate of the per-distance maximum, log max|G| ~ log B - L w."""
    keys = np.round(wts, 9)
    uniq, inv = np.unique(keys, return_inverse=True)
    env = np.zeros(uniq.size)
    np.maximum.at(env, inv, np.abs(mags))
    return fit_decay_arrays(uniq, env, alpha=1.0)


@functools.lru_cache(maxsize=8)
def _omega_geometry(M1: int, dim: int, alpha: float):
    coords = box_coords(M1 + 1, dim)
    diff = coords[:, None, :] - coords[None, :, :]
    sup = np.max(np.abs(diff), axis=-1)
    wts = np.sum(np.abs(diff) ** (1.0 / alpha), axis=-1)
    for a in (coords, sup, wts):
        a.setflags(write=False)
    return coords, sup, wts


def _sym_norm(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(A))))


def coupling_instance(spec: CouplingSpec, seed: int):
    """Synthesize (coords, T, cluster indices) for one seeded trial."""
    rng = np.random.default_rng(seed)
    coords, _, wts = _omega_geometry(spec.M1, spec.b + spec.d, spec.alpha)
    n = coords.shape[0]
    T = spec.noise * rng.uniform(-1.0, 1.0, size=(n, n)) * np.exp(-spec.L * wts)
    T = 0.5 * (T + T.T)
    np.fill_diagonal(T, rng.choice([-1.0, 1.0], n) * rng.uniform(spec.diag_low, spec.diag_high, n))
    cluster = []
    if spec.cluster_size > 0:
        corner = np.full(coords.shape[1], spec.M1 - 2)
        for j in range(spec.cluster_size):
            x = corner.copy()
            x[0] -= j
            cluster.append(int(np.flatnonzero(np.all(coords == x, axis=1))[0]))
        small = math.exp(-spec.M1**spec.theta4) / spec.cluster_strength
        target = np.diag(small * rng.choice([-1.0, 1.0], len(cluster)))
        # choose the cluster block so that its Schur complement on the
        # M1^theta3 neighborhood is exactly the small diagonal target
        sup_to = np.min(np.max(np.abs(coords[:, None, :] - coords[cluster][None, :, :]), axis=-1), axis=1)
        ring = np.setdiff1d(np.flatnonzero(sup_to <= spec.M1**spec.theta3), cluster)
        Tcr = T[np.ix_(cluster, ring)]
        corr = Tcr @ np.linalg.solve(T[np.ix_(ring, ring)], Tcr.T)
        T[np.ix_(cluster, cluster)] = target + 0.5 * (corr + corr.T)
    return coords, T, cluster


def _windows(coords: np.ndarray, centers: np.ndarray, r: float) -> list:
    sup = np.max(np.abs(coords[centers][:, None, :] - coords[None, :, :]), axis=-1)
    return [np.flatnonzero(row <= r) for row in sup]


def _batched_window_checks(T, coords, windows, alpha, L, cut):
    """Max spectral norm of G_V over windows and the min decay margin beyond ``cut``."""
    norm_max, margin = 0.0, math.inf
    by_len: dict = {}
    for w in windows:
        by_len.setdefault(len(w), []).append(w)
    for _, group in by_len.items():
        idx = np.stack(group)
        blocks = T[idx[:, :, None], idx[:, None, :]]
        G = np.linalg.inv(blocks)
        if np.allclose(blocks, np.swapaxes(blocks, 1, 2)):
            norms = 1.0 / np.min(np.abs(np.linalg.eigvalsh(blocks)), axis=1)
        else:
            norms = np.linalg.norm(G, 2, axis=(1, 2))
        norm_max = max(norm_max, float(np.max(norms)))
        c = coords[idx]
        diff = c[:, :, None, :] - c[:, None, :, :]
        sup = np.max(np.abs(diff), axis=-1)
        wts = np.sum(np.abs(diff) ** (1.0 / alpha), axis=-1)
        far = sup > cut
        if np.any(far):
            margin = min(margin, _min_ratio(np.exp(-L * wts[far]), G[far]))
    return norm_max, margin


def coupling_experiment(spec: CouplingSpec, seed: int, check_hypotheses: bool = True) -> CouplingReport:
    """One seeded trial of the good/bad region coupling surrogate.

    T on Omega = [-M1, M1]^(b+d) has a dominant random diagonal, symmetric
    off-diagonal noise below exp(-L |x - x'|_alpha), and an optional planted
    near-singular cluster in a corner with ||G|| close to exp(M1^theta4). The
    decay rate of G_Omega is fitted (per-distance envelope) over pairs with
    both ends outside the M1^theta3 neighborhood of the cluster; the trial
    passes when it is at least (1 - loss_fraction) L.

    Raises
    ------
    ConfigurationError
        Listing every violated exponent or layout constraint.
    """
    bad = spec.violated_constraints()
    if bad:
        raise ConfigurationError("coupling hypotheses unconstructible: " + "; ".join(bad))
    coords, T, cluster = coupling_instance(spec, seed)
    _, sup, wts = _omega_geometry(spec.M1, spec.b + spec.d, spec.alpha)
    n = coords.shape[0]
    G = np.linalg.inv(T)
    green_norm = _sym_norm(G)

    nbhd = np.zeros(n, dtype=bool)
    cl_norm = 0.0
    if cluster:
        sup_to_cluster = np.min(np.max(np.abs(coords[:, None, :] - coords[cluster][None, :, :]), axis=-1), axis=1)
        nbhd = sup_to_cluster <= spec.M1**spec.theta3
        idx = np.flatnonzero(nbhd)
        cl_norm = 1.0 / float(np.min(np.abs(np.linalg.eigvalsh(T[np.ix_(idx, idx)]))))
    cl_bound = math.exp(spec.M1**spec.theta4)

    good_norm, good_margin = math.nan, math.nan
    good_bound = math.exp(spec.M0**spec.kappa)
    met = True
    if check_hypotheses:
        off_diag = T - np.diag(np.diag(T))
        off_ok = bool(np.all(np.abs(off_diag) <= np.exp(-spec.L * wts)))
        good = np.setdiff1d(np.arange(n), cluster)
        windows = _windows(coords, good, spec.M0)
        good_norm, good_margin = _batched_window_checks(T, coords, windows, spec.alpha, spec.L, spec.M0**spec.theta)
        met = off_ok and good_norm <= good_bound and good_margin > 1 and (not cluster or cl_norm < cl_bound)

    keep = ~nbhd
    mask = keep[:, None] & keep[None, :] & (sup >= spec.min_distance)
    fit = _envelope_rate(wts[mask], G[mask])
    passed = fit.L_fit >= (1 - spec.loss_fraction) * spec.L
    return CouplingReport(
        seed=seed,
        green_norm=green_norm,
        norm_bound=math.exp(spec.M1 ** (spec.theta4 + spec.slack)),
        fitted_L=float(fit.L_fit),
        planted_L=spec.L,
        passed=bool(passed),
        cluster=[tuple(int(v) for v in coords[i]) for i in cluster],
        neighborhood_size=int(nbhd.sum()),
        cluster_green_norm=cl_norm,
        cluster_norm_bound=cl_bound,
        good_norm_max=good_norm,
        good_norm_bound=good_bound,
        good_decay_margin=good_margin,
        hypotheses_met=bool(met),
        lemma_rate=spec.L - 2 * spec.delta,
        pairs_fitted=int(mask.sum()),
    )
