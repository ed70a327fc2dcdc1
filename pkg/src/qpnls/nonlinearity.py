"""The nonlinearity H(q, qbar) = f(|q|^2) with f a finite real power series.

All derivatives are evaluated in the field algebra: u = q * conj(q) is a
field, f'(u) and f''(u) follow by Horner's rule, and products are direct
convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BudgetError, ConfigurationError
from .field import FourierField, conjugate_field, multiply_tracked
from .gevrey import GevreyWeight
from .lattice import Box

DEFAULT_BUDGET = 0.1


@dataclass(frozen=True)
class PowerSeries:
    """f(s) = sum_j c_j s^j with real coefficients."""

    coefficients: tuple

    def __post_init__(self):
        cs = tuple(float(c) for c in self.coefficients)
        if not all(math.isfinite(c) for c in cs):
            raise ConfigurationError("power series coefficients must be finite reals")
        object.__setattr__(self, "coefficients", cs if cs else (0.0,))

    @classmethod
    def cubic_nls(cls) -> "PowerSeries":
        """f(s) = s^2 / 2, so that dH/dqbar = |q|^2 q."""
        return cls((0.0, 0.0, 0.5))

    @property
    def degree(self) -> int:
        nz = [j for j, c in enumerate(self.coefficients) if c != 0.0]
        return nz[-1] if nz else 0

    def __call__(self, s):
        out = 0.0
        for c in reversed(self.coefficients):
            out = out * s + c
        return out

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coefficients)


def series_derivative(f: PowerSeries) -> PowerSeries:
    cs = f.coefficients
    if len(cs) <= 1:
        return PowerSeries((0.0,))
    return PowerSeries(tuple(j * cs[j] for j in range(1, len(cs))))


def series_gevrey_norm(f: PowerSeries, w: GevreyWeight, order_cap: int | None = None) -> float:
    """sum_k (L^k / k!)^alpha sup_[-1,1] |f^(k)|, sups bounded by sum_j |c_j| j!/(j-k)!."""
    deg = len(f.coefficients) - 1
    if order_cap is None:
        order_cap = deg
    if order_cap < f.degree:
        raise ConfigurationError(f"order_cap {order_cap} below series degree {f.degree}")
    cs = np.abs(np.asarray(f.coefficients))
    total = 0.0
    for k in range(min(order_cap, deg) + 1):
        sup = sum(cs[j] * math.perm(j, k) for j in range(k, deg + 1))
        total += (w.L**k / math.factorial(k)) ** w.alpha * sup
    return float(total)


def composition_bound(q: FourierField) -> float:
    """Upper bound on sup |q|^2 from the l1 norm of the coefficients."""
    return q.l1() ** 2


def check_budget(q: FourierField, budget: float = DEFAULT_BUDGET) -> None:
    val = composition_bound(q)
    if val > budget:
        raise BudgetError(
            f"field too large for the series composition: ||q||_l1^2 = {val:.4g} exceeds budget {budget:.4g}"
        )


def compose(g: PowerSeries, u: FourierField, work_radius: int | None = None):
    """g(u) by Horner's rule; returns (field, dropped l1 mass).

    Each multiplication is truncated to ``work_radius`` when given.
    """
    cs = g.coefficients
    acc = FourierField.constant(cs[-1], u.d, u.b)
    dropped = 0.0
    for c in reversed(cs[:-1]):
        acc, lost = multiply_tracked(acc, u, work_radius)
        dropped += lost
        acc = acc + FourierField.constant(c, u.d, u.b)
    return acc, dropped


def _finish(f: FourierField, out_box, dropped: float):
    if out_box is None:
        return f, dropped
    radius = out_box.radius if isinstance(out_box, Box) else int(out_box)
    return f.embed(radius), dropped + f.mass_outside(radius)


class HamiltonianTerms(NamedTuple):
    dH_dqbar: FourierField
    Hqqbar: FourierField
    Hqbarqbar: FourierField
    Hqq: FourierField
    dropped: float


def hamiltonian_terms(
    q: FourierField,
    f: PowerSeries,
    out_box=None,
    budget: float = DEFAULT_BUDGET,
    work_radius: int | None = None,
    first: bool = True,
    second: bool = True,
) -> HamiltonianTerms:
    """dH/dqbar and the three second derivatives in one pass.

    dH/dqbar = f'(|q|^2) q, Hqqbar = f''(|q|^2)|q|^2 + f'(|q|^2),
    Hqbarqbar = f''(|q|^2) q^2, Hqq = f''(|q|^2) qbar^2.
    """
    check_budget(q, budget)
    f1 = series_derivative(f)
    f2 = series_derivative(f1)
    qbar = conjugate_field(q)
    u, dropped = multiply_tracked(q, qbar, work_radius)
    u = u.real_part() if q.real_flag else u
    g1, lost = compose(f1, u, work_radius)
    dropped += lost
    dH = Hqqbar = Hqbarqbar = Hqq = None
    if first:
        dH, lost = multiply_tracked(g1, q, work_radius)
        dH, dropped = _finish(dH, out_box, dropped + lost)
    if second:
        g2, lost = compose(f2, u, work_radius)
        dropped += lost
        a, l1 = multiply_tracked(g2, u, work_radius)
        q2, l2 = multiply_tracked(q, q, work_radius)
        qb2, l3 = multiply_tracked(qbar, qbar, work_radius)
        b, l4 = multiply_tracked(g2, q2, work_radius)
        c, l5 = multiply_tracked(g2, qb2, work_radius)
        dropped += l1 + l2 + l3 + l4 + l5
        Hqqbar, dropped = _finish(a + g1, out_box, dropped)
        Hqbarqbar, dropped = _finish(b, out_box, dropped)
        Hqq, dropped = _finish(c, out_box, dropped)
    return HamiltonianTerms(dH, Hqqbar, Hqbarqbar, Hqq, dropped)


def dH_dqbar(q: FourierField, f: PowerSeries, out_box=None, budget: float = DEFAULT_BUDGET) -> FourierField:
    """f'(|q|^2) q, truncated to ``out_box`` (full support when None)."""
    return hamiltonian_terms(q, f, out_box, budget, second=False).dH_dqbar


def second_derivatives(q: FourierField, f: PowerSeries, out_box=None, budget: float = DEFAULT_BUDGET):
    """(Hqqbar, Hqbarqbar, Hqq) truncated to ``out_box``."""
    t = hamiltonian_terms(q, f, out_box, budget, first=False)
    return t.Hqqbar, t.Hqbarqbar, t.Hqq


def composition_hypothesis_gap(u_norm_upper: float, u_sup_lower: float, w: GevreyWeight, m: int) -> tuple:
    """(gap, allowed) for the composition hypothesis ||u|| - ||u||_C0 <= L^alpha / m^(alpha-1)."""
    return u_norm_upper - u_sup_lower, w.L**w.alpha / m ** (w.alpha - 1)
