"""Randomized property suites shared by ``qpnls verify`` and the test suite.

Every suite takes a seed and a trial count and returns a SuiteResult whose
``violations`` must be zero on a correct build. Extra measurements go in
``details``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import FourierField, multiply
from .gevrey import (
    GevreyWeight,
    decay_prefactor,
    f_norm,
    field_alpha_weights,
    gevrey_c0_norm_bracket,
    lattice_sum_exp,
)
from .lattice import ResonantSet, box_coords
from .multiscale import (
    CouplingSpec,
    FieldPolynomial,
    ParamPolynomial,
    arithmetic_distance,
    arithmetic_partition,
    coupling_experiment,
    fit_partition_exponent,
    markov_bound,
    neumann_bound,
    perturbation_check,
    resolvent_residual,
    resolvent_scale,
    taylor_remainder,
)
from .smalldiv import DiophantineSpec, excluded_measure_mc, remove_intervals, verify_kept

SLACK = 1e-12


@dataclass
class SuiteResult:
    name: str
    trials: int
    violations: int
    details: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def random_field(rng: np.random.Generator, d: int, b: int, radius: int, density: float = 0.5, real: bool = False):
    shape = (2 * radius - 1,) * (d + b)
    c = rng.normal(size=shape)
    if not real:
        c = c + 1j * rng.normal(size=shape)
    c = c * (rng.random(shape) < density)
    if not np.any(c):
        c.flat[rng.integers(c.size)] = 1.0
    return FourierField(c, d, b)


# gevrey ---------------------------------------------------------------------------


def submultiplicativity(seed: int, trials: int) -> SuiteResult:
    """||f g||_F <= ||f||_F ||g||_F on random pairs (full product support)."""
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(trials):
        d, b = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        f = random_field(rng, d, b, int(rng.integers(1, 4)))
        g = random_field(rng, d, b, int(rng.integers(1, 4)))
        w = GevreyWeight(float(rng.uniform(1.1, 4.0)), float(rng.uniform(0.05, 2.0)))
        lhs = f_norm(multiply(f, g), w)
        rhs = f_norm(f, w) * f_norm(g, w)
        worst = max(worst, lhs / rhs)
        bad += lhs > rhs * (1 + SLACK)
    return SuiteResult("submultiplicativity", trials, int(bad), {"max_ratio": worst})


def norm_chain(seed: int, trials: int, convention: str = "unit") -> SuiteResult:
    """Two-sided norm comparison and coefficient decay on random trig polynomials.

    Checks, with (lower, upper) the bracket of the derivative-sum norm:
    lower <= ||f||_F at (alpha, L); ||f||_F at (alpha, (1-eps)L - delta) <=
    c^D C_delta upper; and |f_hat(k)| <= c^D upper exp(-alpha (1-eps) L |k|_alpha),
    where c^D is ``decay_prefactor(eps, alpha, D, convention)``.
    """
    rng = np.random.default_rng(seed)
    low_bad = up_bad = dec_bad = 0
    worst_dec = 0.0
    for _ in range(trials):
        d, b = 1, int(rng.integers(1, 3))
        f = random_field(rng, d, b, int(rng.integers(1, 4)))
        alpha = float(rng.uniform(1.3, 3.0))
        L = float(rng.uniform(0.2, 1.0))
        eps = float(rng.uniform(0.1, 0.9))
        delta = float(rng.uniform(0.05, 0.95)) * (1 - eps) * L
        w = GevreyWeight(alpha, L)
        lower, upper = gevrey_c0_norm_bracket(f, w, grid_per_dim=32)
        dim = d + b
        pre = decay_prefactor(eps, alpha, dim, convention)
        low_bad += lower > f_norm(f, w) * (1 + SLACK)
        lhs = f_norm(f, GevreyWeight(alpha, (1 - eps) * L - delta))
        up_bad += lhs > pre * lattice_sum_exp(delta, alpha, dim) * upper * (1 + SLACK)
        env = pre * upper * np.exp(-alpha * (1 - eps) * L * field_alpha_weights(f, alpha))
        ratio = float(np.max(np.abs(f.coeffs) / env))
        worst_dec = max(worst_dec, ratio)
        dec_bad += ratio > 1 + SLACK
    return SuiteResult(
        f"norm-chain[{convention}]",
        trials,
        int(low_bad + up_bad + dec_bad),
        {"lower_violations": int(low_bad), "upper_violations": int(up_bad), "decay_violations": int(dec_bad),
         "max_decay_ratio": worst_dec},
    )


def gevrey_suite(seed: int = 0, trials: int = 100) -> SuiteResult:
    s = submultiplicativity(seed, trials)
    c = norm_chain(seed + 1, max(1, trials // 10))
    printed = norm_chain(seed + 1, max(1, trials // 10), convention="2pi")
    return SuiteResult(
        "gevrey-norms",
        s.trials + c.trials,
        s.violations + c.violations,
        {"submultiplicativity": s.details, "chain": c.details, "chain_2pi_constant": printed.details},
    )


# multiscale -----------------------------------------------------------------------


def resolvent_suite(seed: int = 0, trials: int = 100, tol: float = 1e-9) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(trials):
        n = int(rng.integers(4, 31))
        T = rng.normal(size=(n, n)) / math.sqrt(n) + 3.0 * np.eye(n)
        perm = rng.permutation(n)
        cut = int(rng.integers(1, n))
        L1, L2 = perm[:cut], perm[cut:]
        defect = resolvent_residual(T, L1, L2)
        scale = resolvent_scale(T, L1, L2)
        worst = max(worst, defect / scale)
        bad += defect > tol * scale
    return SuiteResult("resolvent", trials, int(bad), {"max_scaled_defect": worst})


def perturbation_instance(rng: np.random.Generator, rho: float = 1e-2):
    """A random (T, T', sites, B, D, L, eta, alpha) meeting the stability hypotheses."""
    dim = int(rng.integers(1, 3))
    N = int(rng.integers(2, 4))
    sites = box_coords(N, dim)
    n = sites.shape[0]
    alpha = float(rng.uniform(1.2, 3.0))
    L = float(rng.uniform(0.2, 1.0))
    D = float(rng.integers(0, N))
    diff = sites[:, None, :] - sites[None, :, :]
    wts = np.sum(np.abs(diff) ** (1.0 / alpha), axis=-1)
    T = 0.5 * rng.uniform(-1, 1, (n, n)) * np.exp(-alpha * 1.5 * L * wts)
    np.fill_diagonal(T, rng.choice([-1.0, 1.0], n) * rng.uniform(2.0, 6.0, n))
    B = 1.5 * float(np.linalg.norm(np.linalg.inv(T), 2))
    eta = rho * float(rng.uniform(0.01, 0.99)) / (N ** (2 * dim + 1) * B**2 * math.exp(D))
    Tp = T + eta * rng.uniform(-1, 1, (n, n)) * np.exp(-alpha * L * wts)
    return T, Tp, sites, B, D, L, eta, alpha


def perturbation_suite(seed: int = 0, trials: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    met = violated = unmet = 0
    min_norm, min_decay = math.inf, math.inf
    while met < trials and met + unmet < 10 * trials:
        T, Tp, sites, B, D, L, eta, alpha = perturbation_instance(rng)
        rep = perturbation_check(T, Tp, sites, B, D, L, eta, alpha)
        if rep.status == "hypotheses unmet":
            unmet += 1
            continue
        met += 1
        violated += rep.status == "conclusion violated"
        min_norm = min(min_norm, rep.norm_margin)
        min_decay = min(min_decay, rep.decay_margin)
    short = max(trials - met, 0)
    return SuiteResult(
        "perturbation",
        met,
        int(violated + short),
        {"hypotheses_unmet": unmet, "min_norm_margin": min_norm, "min_decay_margin": min_decay},
    )


def neumann_suite(seed: int = 0, trials: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 25))
        Dd = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 5.0, n)
        S = rng.normal(size=(n, n))
        r0 = float(np.linalg.norm(S / Dd[None, :], 2))
        eps = float(rng.uniform(0.0, 0.5)) / r0
        rep = neumann_bound(Dd, S, eps)
        worst = max(worst, rep.lhs / rep.rhs)
        bad += not (rep.applicable and rep.holds)
    return SuiteResult("neumann", trials, int(bad), {"max_lhs_over_rhs": worst})


def random_polynomial(rng: np.random.Generator, nvars: int, max_degree: int = 10) -> ParamPolynomial:
    deg = int(rng.integers(0, max_degree + 1))
    terms = {}
    for e in np.ndindex(*(deg + 1,) * nvars):
        if sum(e) <= deg and rng.random() < 0.7:
            terms[e] = rng.normal()
    return ParamPolynomial(nvars, terms)


def markov_suite(seed: int = 0, trials: int = 100) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(trials):
        nvars = int(rng.integers(1, 3))
        p = random_polynomial(rng, nvars)
        lows = rng.uniform(-2, 1, nvars)
        highs = lows + rng.uniform(0.1, 3.0, nvars)
        rep = markov_bound(p, lows, highs, per_dim=1001 if nvars == 1 else 121)
        if rep.bound > 0:
            worst = max(worst, rep.measured_sup_grad / rep.bound)
        bad += not rep.holds
    return SuiteResult("markov", trials, int(bad), {"max_measured_over_bound": worst})


def taylor_suite(seed: int = 0, trials: int = 50) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad, samples = 0, 0
    for _ in range(trials):
        nvars = int(rng.integers(1, 3))
        terms = {}
        for _m in range(int(rng.integers(1, 4))):
            x = (int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
            terms[x] = random_polynomial(rng, nvars, max_degree=5)
        phi = FieldPolynomial(1, 1, nvars, terms)
        center = rng.uniform(-0.5, 0.5, nvars)
        p = int(rng.integers(0, max(phi.degree, 1) + 1))
        L1 = float(rng.uniform(0.5, 2.0))
        L2 = float(rng.uniform(0.1, 1.0))
        rep = taylor_remainder(phi, center, p, float(rng.uniform(0.05, 0.5)), (L1, L2),
                               alpha=float(rng.uniform(1.2, 3.0)), per_dim=5)
        bad += rep.violations
        samples += rep.samples
    return SuiteResult("taylor", trials, int(bad), {"samples": samples})


def partition_suite(seed: int = 0, trials: int = 50) -> SuiteResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        d = int(rng.integers(1, 3))
        radius = int(rng.integers(2, 9 if d == 1 else 6))
        B = int(rng.integers(0, 8))
        rep = arithmetic_partition(B, radius, d)
        # brute-force re-check of the separation across clusters
        cl = [np.array(c) for c in rep.clusters]
        sep_ok = all(
            np.min(arithmetic_distance(a, c)) > B for i, a in enumerate(cl) for c in cl[i + 1:]
        )
        bad += not (rep.separated and sep_ok)
    C0, _ = fit_partition_exponent([2, 3, 4, 6, 8, 12, 16], 12, 1)
    return SuiteResult("partition", trials, int(bad), {"fitted_C0_d1": C0})


def coupling_suite(seed: int = 0, trials: int = 20, spec: CouplingSpec | None = None,
                   min_fraction: float = 0.95) -> SuiteResult:
    spec = spec or CouplingSpec()
    reps = [coupling_experiment(spec, seed + t) for t in range(trials)]
    passed = sum(r.passed for r in reps)
    met = sum(r.hypotheses_met for r in reps)
    frac = passed / trials if trials else 1.0
    return SuiteResult(
        "coupling",
        trials,
        int(frac < min_fraction),
        {"pass_fraction": frac, "hypotheses_met": met, "min_fitted_L": min((r.fitted_L for r in reps), default=math.nan),
         "planted_L": spec.L},
    )


# smalldiv -------------------------------------------------------------------------


def smalldiv_suite(seed: int = 0, trials: int = 20000) -> SuiteResult:
    """Interval removal re-verification and monotonicity of the MC exclusion fraction."""
    rem = remove_intervals([(0.0, 1.0)], M=2, N=8, gamma=0.05, tau=3.0)
    kept_bad = verify_kept(rem, M=2, N=8, gamma=0.05, tau=3.0)
    R = ResonantSet([(1,)])
    fracs = [excluded_measure_mc(DiophantineSpec(g, 3.0, 8), R, trials, seed) for g in (0.01, 0.02, 0.04)]
    mono_bad = sum(b < a for a, b in zip(fracs, fracs[1:]))
    return SuiteResult(
        "smalldiv",
        trials,
        int(kept_bad + mono_bad),
        {"kept_cell_violations": int(kept_bad), "removed_measure": rem.removed_measure, "fractions": fracs},
    )


SUITES = {
    "gevrey-norms": gevrey_suite,
    "resolvent": resolvent_suite,
    "perturbation": perturbation_suite,
    "neumann": neumann_suite,
    "markov": markov_suite,
    "taylor": taylor_suite,
    "partition": partition_suite,
    "coupling": coupling_suite,
    "smalldiv": smalldiv_suite,
}
