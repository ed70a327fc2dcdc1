"""Diophantine conditions on the frequency parameters.

Two conditions are used:

* DC_{gamma,C}: |k.lambda - mu_n| > gamma (1+|k|)^-C for |k| < N, (n,k) not in R;
* the frequency-only condition |k.lambda'| > gamma (1+|k|)^-tau on a k-range.

|k| is the sup norm throughout.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .field import Multiplier
from .lattice import ResonantSet, box_coords, unit_vector

MAX_CELLS = 4_000_000


@dataclass(frozen=True)
class DiophantineSpec:
    """gamma > 0 (0 allowed as a degenerate case), exponent C and horizon N for |k| < N."""

    gamma: float
    C: float
    N: int

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative")
        if self.N < 1:
            raise ConfigurationError("horizon N must be >= 1")

    def validate_for(self, d: int, b: int) -> None:
        if not self.C > b + d:
            raise ConfigurationError(f"Diophantine exponent C={self.C} must exceed b+d={b + d}")


def spatial_horizon(N: int, b: int) -> int:
    """|k.lambda| <= b N on the horizon, so only |n|^2 <= b N + 1 can be small divisors."""
    return b * N + 1


def _spatial_scan(R: ResonantSet, N: int) -> np.ndarray:
    bound = spatial_horizon(N, R.b)
    rad = math.isqrt(bound) + 1
    cand = box_coords(rad, R.d)
    cand = cand[np.sum(cand**2, axis=1) <= bound]
    extra = np.array(R.spatial_modes, dtype=np.int64).reshape(-1, R.d)
    allm = np.unique(np.concatenate([cand, extra], axis=0), axis=0)
    return allm


def _k_scan(b: int, N: int, lower: int = 0) -> np.ndarray:
    ks = box_coords(N, b)
    sup = np.max(np.abs(ks), axis=1, initial=0)
    return ks[sup > lower] if lower >= 0 else ks


def dc_check(lam: Sequence[float], spec: DiophantineSpec, mu: Multiplier, R: ResonantSet):
    """Exhaustive scan of DC_{gamma,C} over the finite horizon.

    The pair (0, 0) is skipped when 0 is not a resonant mode: its divisor
    0 . lambda - |0|^2 vanishes for every lambda and carries no information.

    Returns
    -------
    passed : bool
    violations : list of (n, k, value)
        Sorted by (n, k).
    """
    spec.validate_for(R.d, R.b)
    lam = np.asarray(lam, dtype=float)
    ns = _spatial_scan(R, spec.N)
    ks = _k_scan(R.b, spec.N, lower=-1)
    thr = spec.gamma * (1.0 + np.max(np.abs(ks), axis=1, initial=0)) ** (-spec.C)
    kdot = ks @ lam
    violations = []
    for n in ns:
        nt = tuple(int(v) for v in n)
        vals = kdot - mu(nt)
        bad = np.flatnonzero(np.abs(vals) <= thr)
        for i in bad:
            kt = tuple(int(v) for v in ks[i])
            if _excluded(nt, kt, R):
                continue
            violations.append((nt, kt, float(vals[i])))
    violations.sort(key=lambda v: (v[0], v[1]))
    return not violations, violations


def _excluded(nt: tuple, kt: tuple, R: ResonantSet) -> bool:
    if nt + kt in {tuple(m.vector) for m in R.modes}:
        return True
    return not any(kt) and not any(nt) and nt not in set(R.spatial_modes)


def worst_divisor(lam: Sequence[float], spec: DiophantineSpec, mu: Multiplier, R: ResonantSet):
    """Smallest |k.lambda - mu_n| (1+|k|)^C over the horizon, with its (n, k)."""
    lam = np.asarray(lam, dtype=float)
    ns = _spatial_scan(R, spec.N)
    ks = _k_scan(R.b, spec.N, lower=-1)
    scale = (1.0 + np.max(np.abs(ks), axis=1, initial=0)) ** spec.C
    kdot = ks @ lam
    best = (math.inf, None, None)
    for n in ns:
        nt = tuple(int(v) for v in n)
        ratio = np.abs(kdot - mu(nt)) * scale
        for i in np.argsort(ratio, kind="stable"):
            kt = tuple(int(v) for v in ks[i])
            if _excluded(nt, kt, R):
                continue
            if ratio[i] < best[0]:
                best = (float(ratio[i]), nt, kt)
            break
    return best


def dc_prime_check(lambda_prime: Sequence[float], gamma: float, tau: float, M: int, lower: int = 0) -> bool:
    """|k.lambda'| > gamma (1+|k|)^-tau for lower < |k| < M (default 0 < |k| < M)."""
    lp = np.asarray(lambda_prime, dtype=float)
    if not tau > lp.size:
        raise ConfigurationError(f"tau must exceed b={lp.size}")
    if M <= 1:
        return True
    ks = _k_scan(lp.size, M, lower)
    if ks.size == 0:
        return True
    thr = gamma * (1.0 + np.max(np.abs(ks), axis=1)) ** (-tau)
    return bool(np.all(np.abs(ks @ lp) > thr))


@dataclass(frozen=True)
class IntervalRemoval:
    kept: list
    removed_measure: float
    total_measure: float
    cell_size: float
    grid_exponent: float
    bound_shape: float

    @property
    def K(self) -> float:
        """removed measure / (gamma M^(1-tau))."""
        return self.removed_measure / self.bound_shape if self.bound_shape > 0 else math.inf


def certified_grid_exponent(N: int, gamma: float, tau: float, b: int) -> float:
    """Smallest C with b (N-1) N^-C <= gamma N^-tau.

    With this cell size, a cell holding one point that satisfies the
    2 gamma condition satisfies the gamma condition everywhere.
    """
    if gamma <= 0:
        raise ConfigurationError("a certified grid needs gamma > 0; pass grid_exponent explicitly")
    return tau + math.log(b * max(N - 1, 1) / gamma) / math.log(N)


def _cell_samples(b: int, per_cell: int) -> np.ndarray:
    """Relative sample offsets in [0,1)^b: midpoints of a regular sub-grid."""
    side = max(1, round(per_cell ** (1.0 / b)))
    pts = (np.arange(side) + 0.5) / side
    return np.array(list(itertools.product(pts, repeat=b)))


def _k_band(b: int, M: int, N: int) -> np.ndarray:
    ks = box_coords(N, b)
    sup = np.max(np.abs(ks), axis=1)
    return ks[(sup > M) & (sup < N)]


def remove_intervals(
    I: Sequence,
    M: int,
    N: int,
    gamma: float,
    tau: float,
    grid_exponent: float | None = None,
    samples_per_cell: int = 16,
) -> IntervalRemoval:
    """Partition I into N^-C cells and drop cells failing the 2 gamma condition.

    A cell is kept when at least one of its samples satisfies
    |k.lambda| > 2 gamma (1+|k|)^-tau for all M < |k| < N.

    Parameters
    ----------
    I : sequence of (lo, hi)
        Parameter box, one pair per frequency direction (b <= 2).
    grid_exponent : float, optional
        C in the cell size N^-C. Defaults to ``certified_grid_exponent``.
    """
    I = [tuple(map(float, iv)) for iv in I]
    b = len(I)
    if b > 2:
        raise ConfigurationError("remove_intervals supports b <= 2 only")
    C = certified_grid_exponent(N, gamma, tau, b) if grid_exponent is None else float(grid_exponent)
    h = float(N) ** (-C)
    counts = [max(1, math.ceil((hi - lo) / h - 1e-9)) for lo, hi in I]
    if math.prod(counts) > MAX_CELLS:
        raise ConfigurationError(f"{math.prod(counts)} cells exceed the cap {MAX_CELLS}; lower grid_exponent")
    ks = _k_band(b, M, N)
    offsets = _cell_samples(b, samples_per_cell)
    edges = [np.minimum(lo + h * np.arange(c + 1), hi) for (lo, hi), c in zip(I, counts)]
    grids = np.meshgrid(*[e[:-1] for e in edges], indexing="ij")
    widths = np.meshgrid(*[np.diff(e) for e in edges], indexing="ij")
    lows = np.stack([g.ravel() for g in grids], axis=1)
    wid = np.stack([g.ravel() for g in widths], axis=1)
    keep = np.zeros(len(lows), dtype=bool)
    if ks.size == 0:
        keep[:] = True
    else:
        thr = 2.0 * gamma * (1.0 + np.max(np.abs(ks), axis=1)) ** (-tau)
        for off in offsets:
            pts = lows + off * wid
            ok = np.all(np.abs(pts @ ks.T) > thr, axis=1)
            keep |= ok
    cell_meas = np.prod(wid, axis=1)
    total = float(np.prod([hi - lo for lo, hi in I]))
    removed = float(np.sum(cell_meas[~keep]))
    kept_cells = [tuple((float(l), float(l + w)) for l, w in zip(lo_, w_)) for lo_, w_, k in zip(lows, wid, keep) if k]
    if b == 1:
        kept_cells = _merge_1d([c[0] for c in kept_cells])
    return IntervalRemoval(kept_cells, removed, total, h, C, gamma * float(M) ** (1.0 - tau))


def _merge_1d(cells: list) -> list:
    out = []
    for lo, hi in cells:
        if out and abs(out[-1][1] - lo) <= 1e-15 * max(1.0, abs(lo)):
            out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return [((lo, hi),) for lo, hi in out]


def verify_kept(removal: IntervalRemoval, M: int, N: int, gamma: float, tau: float, fine_per_cell: int = 8) -> int:
    """Count fine-grid points in kept cells violating the gamma condition for M < |k| < N."""
    if not removal.kept:
        return 0
    b = len(removal.kept[0])
    ks = _k_band(b, M, N)
    if ks.size == 0:
        return 0
    thr = gamma * (1.0 + np.max(np.abs(ks), axis=1)) ** (-tau)
    h = removal.cell_size
    bad = 0
    for box in removal.kept:
        axes = []
        for lo, hi in box:
            n = max(2, fine_per_cell * max(1, math.ceil((hi - lo) / h)) + 1)
            axes.append(np.linspace(lo, hi, n))
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
            bad += int(np.sum(~np.all(np.abs(chunk @ ks.T) > thr, axis=1)))
    return bad


def excluded_measure_mc(
    spec: DiophantineSpec,
    R: ResonantSet,
    samples: int,
    seed: int,
    mu_factory: Callable | None = None,
) -> float:
    """Fraction of uniform lambda in [0,1]^b failing DC_{gamma,C} (deterministic in seed).

    The default spectrum is mu_{n_j} = lambda_j, mu_n = |n|^2 otherwise; this
    case is vectorized. A custom ``mu_factory(lam) -> Multiplier`` falls back
    to per-sample scans.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    spec.validate_for(R.d, R.b)
    rng = np.random.default_rng(seed)
    lam = rng.random((samples, R.b))
    if mu_factory is not None:
        fails = sum(not dc_check(l, spec, mu_factory(l), R)[0] for l in lam)
        return fails / samples
    ns = _spatial_scan(R, spec.N)
    ks = _k_scan(R.b, spec.N, lower=-1)
    thr = spec.gamma * (1.0 + np.max(np.abs(ks), axis=1, initial=0)) ** (-spec.C)
    kdot = lam @ ks.T  # (samples, K)
    res_index = {tuple(n): j for j, n in enumerate(R.spatial_modes)}
    failed = np.zeros(samples, dtype=bool)
    for n in ns:
        nt = tuple(int(v) for v in n)
        valid = np.ones(len(ks), dtype=bool)
        if nt in res_index:
            j = res_index[nt]
            mu = lam[:, [j]]
            valid &= ~np.all(ks == np.array(unit_vector(j, R.b)), axis=1)
        else:
            mu = float(sum(v * v for v in nt))
            if not any(nt):
                valid &= np.any(ks != 0, axis=1)
        bad = (np.abs(kdot - mu) <= thr) & valid
        failed |= np.any(bad, axis=1)
    return float(np.mean(failed))
