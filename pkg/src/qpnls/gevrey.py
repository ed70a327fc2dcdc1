"""Gevrey norms of trigonometric polynomials and decay diagnostics.

Two norms are used for a function f on the torus with Fourier coefficients
f_hat:

* the weighted l1 norm ``||f||_F = sum_x exp(alpha L |x|_alpha) |f_hat(x)|``,
  computed exactly;
* the derivative-sum norm ``sum_beta (L^|beta| / beta!)^alpha ||d^beta f||_C0``,
  which is only bracketed: grid maxima give a lower bound and the l1 Fourier
  bound on each derivative (plus a certified tail) gives an upper bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy import special

from .errors import ConfigurationError
from .field import FourierField
from .lattice import MultiIndex, alpha_index_weight, alpha_weight_array, box_coords

MAX_GRID_POINTS = 1 << 20


@dataclass(frozen=True)
class GevreyWeight:
    """Gevrey index alpha > 1 and width L > 0."""

    alpha: float
    L: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ConfigurationError(f"Gevrey index alpha must exceed 1, got {self.alpha}")
        if not self.L > 0:
            raise ConfigurationError(f"Gevrey width L must be positive, got {self.L}")


@dataclass(frozen=True)
class DecayFit:
    """Bound |m(x,x')| <= B exp(-alpha L_fit |x-x'|_alpha).

    ``max_residual`` is the largest deviation of log|m| from the least
    squares line; B has already been inflated so the bound holds on every
    fitted entry.
    """

    B: float
    L_fit: float
    max_residual: float


@lru_cache(maxsize=64)
def _alpha_weights(radius: int, dim: int, alpha: float) -> np.ndarray:
    w = alpha_weight_array(box_coords(radius, dim), alpha)
    w.setflags(write=False)
    return w


def field_alpha_weights(f: FourierField, alpha: float) -> np.ndarray:
    """|x|_alpha for every stored site of ``f``, shaped like its coefficients."""
    return _alpha_weights(f.radius, f.dim, float(alpha)).reshape(f.coeffs.shape)


def f_norm(f: FourierField, w: GevreyWeight) -> float:
    """Weighted l1 norm sum_x exp(alpha L |x|_alpha) |f_hat(x)|."""
    ws = field_alpha_weights(f, w.alpha)
    return float(np.sum(np.exp(w.alpha * w.L * ws) * np.abs(f.coeffs)))


def weight_factor(x: MultiIndex, w: GevreyWeight) -> float:
    """exp(alpha L |x|_alpha), the bound on the Gevrey norm of exp(i x.theta)."""
    return math.exp(w.alpha * w.L * alpha_index_weight(x, w.alpha))


def decay_constant_h(eps: float, alpha: float) -> float:
    """h(eps, alpha) = (1 / (1 - (1-eps)^(alpha/(alpha-1))))^(alpha-1)."""
    if not 0 < eps < 1:
        raise ConfigurationError(f"eps must lie in (0, 1), got {eps}")
    if not alpha > 1:
        raise ConfigurationError(f"alpha must exceed 1, got {alpha}")
    return (1.0 / (1.0 - (1.0 - eps) ** (alpha / (alpha - 1.0)))) ** (alpha - 1.0)


def decay_prefactor(eps: float, alpha: float, dim: int, convention: str = "unit") -> float:
    """Constant in |f_hat(k)| <= const * ||f||_{alpha,L} * exp(-alpha (1-eps) L |k|_alpha).

    ``convention="unit"`` is h^dim, valid for the expansion
    f = sum f_hat(k) exp(i k.x) where |f_hat(k)| <= ||f||_C0.
    ``convention="2pi"`` is (h / 2 pi)^dim, which additionally assumes
    |f_hat(k)| <= (2 pi)^-dim ||f||_C0; that assumption fails for this
    expansion (take f = exp(i x)), so the smaller constant is not a valid
    bound in general. It is kept to demonstrate that failure.
    """
    h = decay_constant_h(eps, alpha)
    if convention == "unit":
        return h**dim
    if convention == "2pi":
        return (h / (2 * math.pi)) ** dim
    raise ConfigurationError(f"unknown coefficient convention {convention!r}")


def lattice_sum_exp(delta: float, alpha: float, dim: int, terms: int = 4096) -> float:
    """C_delta = sum over Z^dim of exp(-alpha delta |k|_alpha), with certified tail.

    The sum factorizes over coordinates; the one-dimensional tail beyond
    ``terms`` is bounded by the integral of the decreasing summand.
    """
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    c = alpha * delta
    n = np.arange(1, terms + 1, dtype=float)
    partial = 1.0 + 2.0 * float(np.sum(np.exp(-c * n ** (1.0 / alpha))))
    # int_M^inf exp(-c t^(1/alpha)) dt = alpha c^-alpha Gamma(alpha, c M^(1/alpha))
    x = c * terms ** (1.0 / alpha)
    tail = alpha * c ** (-alpha) * special.gamma(alpha) * special.gammaincc(alpha, x)
    return (partial + 2.0 * tail) ** dim


# derivative-sum norm bracket -----------------------------------------------------
def _order_profiles(f: FourierField, w: GevreyWeight, order_cap: int) -> np.ndarray:
    """For each stored site x, the sums over |beta|_1 = m of prod_j (L^b_j |x_j|^b_j / b_j!)^alpha.

    Returns an array (sites, order_cap+1).
    """
    coords = np.abs(f.coords()).astype(float)
    m = np.arange(order_cap + 1)
    log_fact = special.gammaln(m + 1.0)
    prof = None
    for j in range(f.dim):
        z = coords[:, j]
        # per-coordinate terms (L z)^m / m!, raised to alpha; z=0 gives delta_{m,0}
        with np.errstate(divide="ignore", invalid="ignore"):
            logz = np.log(w.L * z)
            lt = w.alpha * (m[None, :] * logz[:, None] - log_fact[None, :])
        lt[:, 0] = 0.0
        term = np.exp(lt)
        term[z == 0, 1:] = 0.0
        if prof is None:
            prof = term
        else:
            new = np.zeros_like(prof)
            for a in range(order_cap + 1):
                new[:, a:] += prof[:, [a]] * term[:, : order_cap + 1 - a]
            prof = new
    if prof is None:
        prof = np.zeros((coords.shape[0], order_cap + 1))
        prof[:, 0] = 1.0
    return prof


def _tail_bound(f: FourierField, w: GevreyWeight, order_cap: int) -> np.ndarray:
    """Per-site bound on the sum over |beta|_1 > order_cap, via (sum_{m>cap} Z^m/m!)^alpha."""
    Z = w.L * alpha_weight_array(f.coords(), w.alpha)
    q = order_cap + 2
    if np.any(Z >= q):
        raise ConfigurationError(
            f"tail bound not finite: L|x|_alpha = {Z.max():.3g} >= order_cap+2 = {q}; raise order_cap"
        )
    with np.errstate(divide="ignore"):
        log_first = (order_cap + 1) * np.log(Z) - special.gammaln(order_cap + 2.0)
    first = np.exp(log_first)
    return (first / (1.0 - Z / q)) ** w.alpha


def _grid_size(dim: int, grid_per_dim: int) -> int:
    if dim == 0:
        return 1
    g = grid_per_dim
    while g**dim > MAX_GRID_POINTS and g > 2:
        g //= 2
    return g


def _grid_sup_of_derivatives(f: FourierField, orders: list, G: int) -> np.ndarray:
    """max over a uniform G^dim grid of |d^beta f| for each beta in ``orders``."""
    r = f.radius
    modes = np.arange(-(r - 1), r)
    theta = 2 * np.pi * np.arange(G) / G
    E = np.exp(1j * np.outer(theta, modes))  # (G, 2r-1)
    out = np.empty(len(orders))
    c = f.coeffs.astype(np.complex128)
    for i, beta in enumerate(orders):
        vals = c
        for j, bj in enumerate(beta):
            factor = (1j * modes) ** bj
            shape = [1] * f.dim
            shape[j] = -1
            vals = vals * factor.reshape(shape)
        for j in range(f.dim):
            vals = np.tensordot(E, vals, axes=([1], [j]))
            vals = np.moveaxis(vals, 0, j)
        out[i] = float(np.max(np.abs(vals)))
    return out


def _multi_indices_of_order(dim: int, m: int):
    if dim == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _multi_indices_of_order(dim - 1, m - first):
            yield (first,) + rest


def gevrey_c0_norm_bracket(
    f: FourierField, w: GevreyWeight, order_cap: int = 40, grid_per_dim: int = 64
) -> tuple:
    """Bracket (lower, upper) of sum_beta (L^|beta|/beta!)^alpha ||d^beta f||_C0.

    The lower bound sums grid maxima of |d^beta f| over orders up to
    ``order_cap``, stopping early once the remaining orders cannot change
    the sum at double precision. The upper bound replaces each sup norm by
    sum_x |x^beta| |f_hat(x)| and adds a certified tail for orders above the cap.

    Raises
    ------
    ConfigurationError
        If the tail bound is not finite (L |x|_alpha >= order_cap + 2 on the support).
    """
    if order_cap < 0:
        raise ConfigurationError("order_cap must be non-negative")
    absc = np.abs(f.coeffs).ravel()
    nz = absc > 0
    if not np.any(nz):
        return 0.0, 0.0
    if f.dim == 0:
        v = float(absc[0])
        return v, v
    prof = _order_profiles(f, w, order_cap)
    tail = _tail_bound(f, w, order_cap)
    per_order = absc @ prof  # upper bound on each order's contribution
    upper = float(np.sum(per_order) + absc @ tail)

    G = _grid_size(f.dim, grid_per_dim)
    lower = 0.0
    log_L = math.log(w.L)
    for m in range(order_cap + 1):
        remaining = float(np.sum(per_order[m:]))
        if m > 0 and remaining <= 1e-17 * lower:
            break
        orders = list(_multi_indices_of_order(f.dim, m))
        sups = _grid_sup_of_derivatives(f, orders, G)
        for beta, s in zip(orders, sups):
            if s == 0.0:
                continue
            log_c = w.alpha * (m * log_L - sum(math.lgamma(bj + 1) for bj in beta))
            lower += math.exp(log_c) * s
    return lower, upper


# decay fitting ------------------------------------------------------------------
def fit_decay_arrays(weights: np.ndarray, magnitudes: np.ndarray, alpha: float, floor: float = 0.0) -> DecayFit:
    """Fit log m = log B - alpha L w on off-diagonal entries (w > 0).

    Entries below ``floor * max(m)`` are left out of the least-squares fit
    but still enter the inflation of B, so the returned bound holds on
    every nonzero off-diagonal entry.
    """
    wts = np.asarray(weights, dtype=float).ravel()
    mag = np.abs(np.asarray(magnitudes, dtype=float)).ravel()
    off = wts > 0
    wts, mag = wts[off], mag[off]
    nz = mag > 0
    if not np.any(nz):
        return DecayFit(B=0.0, L_fit=math.inf, max_residual=0.0)
    wts, mag = wts[nz], mag[nz]
    y = np.log(mag)
    use = mag >= floor * mag.max() if floor > 0 else np.ones_like(mag, dtype=bool)
    xw = wts[use]
    if np.ptp(xw) == 0:
        L_fit = 0.0
        resid = 0.0 if xw.size == 1 else float(np.ptp(y[use]))
    else:
        A = np.stack([np.ones_like(xw), -alpha * xw], axis=1)
        coef, *_ = np.linalg.lstsq(A, y[use], rcond=None)
        L_fit = float(coef[1])
        resid = float(np.max(np.abs(A @ coef - y[use])))
    B = float(np.max(mag * np.exp(alpha * L_fit * wts)))
    return DecayFit(B=B, L_fit=L_fit, max_residual=resid)


def fit_exponential_decay(entries: Mapping, alpha: float, floor: float = 0.0) -> DecayFit:
    """Decay fit over a map ``{(x, x'): magnitude}`` using |x - x'|_alpha.

    Diagonal pairs (x == x') are ignored.
    """
    if not entries:
        raise ConfigurationError("need at least one entry")
    wts, mags = [], []
    for (x, xp), m in entries.items():
        vx = x.vector if isinstance(x, MultiIndex) else tuple(x)
        vp = xp.vector if isinstance(xp, MultiIndex) else tuple(xp)
        wts.append(alpha_index_weight([a - c for a, c in zip(vx, vp)], alpha))
        mags.append(abs(m))
    return fit_decay_arrays(np.array(wts), np.array(mags), alpha, floor)


def bound_holds(fit: DecayFit, weights: np.ndarray, magnitudes: np.ndarray, alpha: float, rtol: float = 1e-12) -> bool:
    """Re-scan: every off-diagonal entry satisfies the fitted bound."""
    wts = np.asarray(weights, dtype=float).ravel()
    mag = np.abs(np.asarray(magnitudes, dtype=float)).ravel()
    off = wts > 0
    if fit.B == 0.0:
        return bool(np.all(mag[off] == 0))
    bound = fit.B * np.exp(-alpha * fit.L_fit * wts[off])
    return bool(np.all(mag[off] <= bound * (1 + rtol)))
