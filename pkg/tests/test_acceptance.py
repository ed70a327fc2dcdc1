"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and shown in the terminal summary.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qpnls import cli, verify
from qpnls.lattice import ResonantSet, resonant_mask
from qpnls.newton import NewtonConfig, Schedule, initial_field, run, scheduled_width
from qpnls.nonlinearity import PowerSeries
from qpnls.smalldiv import DiophantineSpec, excluded_measure_mc, remove_intervals, verify_kept

GOLDEN = 0.6180339887498949
CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def report(name, ok, detail):
    line = f"{name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def headline_config(eps=1e-3):
    return NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(GOLDEN,), epsilon=eps, alpha=2.0, L0=1.0,
                        f=PowerSeries.cubic_nls(), gamma=0.01, schedule=Schedule(N0=4, growth=2.0, N_max=16, max_steps=6))


def two_mode_config(eps):
    # two frequencies make the solution non-trivial so the contraction has several steps to measure
    return NewtonConfig(modes=((1,), (-2,)), amplitudes=(0.1, 0.1), lam=(0.41421356, 0.7320508), epsilon=eps,
                        f=PowerSeries.cubic_nls(), gamma=1e-4,
                        schedule=Schedule(N0=3, growth=1.5, N_max=7, max_steps=8), diagnostics_max_dim=0)


_RUNS = {}


def timed_run(key, cfg):
    if key not in _RUNS:
        t = time.perf_counter()
        res = run(cfg)
        _RUNS[key] = (res, time.perf_counter() - t)
    return _RUNS[key]


def grid_residual(q, lam, lam_prime, eps, f, R):
    """Residual coefficients on the box of q from pointwise products on a physical grid.

    The grid is large enough that f'(|q|^2) q has no aliasing back into the box.
    """
    D = q.d + q.b
    width = 2 * q.radius - 1
    degree = 2 * max(f.degree, 1) - 1
    M = (degree + 1) * width
    A = np.zeros((M,) * D, dtype=complex)
    idx = np.arange(width) - (q.radius - 1)
    A[np.ix_(*[idx % M] * D)] = q.coeffs
    u = np.fft.ifftn(A) * M**D
    s = np.abs(u) ** 2
    fp = np.zeros_like(s)
    for j, c in enumerate(f.coefficients):
        if j:
            fp = fp + j * c * s ** (j - 1)
    g = np.fft.fftn(fp * u) / M**D
    nonlin = g[np.ix_(*[idx % M] * D)]
    grids = np.meshgrid(*[idx] * D, indexing="ij")
    n, k = grids[: q.d], grids[q.d:]
    kdot = sum(kj * lj for kj, lj in zip(k, lam_prime))
    spatial = {m.vector[: q.d]: j for j, m in enumerate(R.modes)}
    mu = np.zeros(q.coeffs.shape)
    for pos in np.ndindex(*q.coeffs.shape):
        nt = tuple(int(v[pos]) for v in n)
        mu[pos] = lam[spatial[nt]] if nt in spatial else float(sum(v * v for v in nt))
    return (kdot - mu) * q.coeffs - eps * nonlin, grids


def weighted_sum(F, grids, alpha, L):
    w = sum(np.abs(g) ** (1 / alpha) for g in grids)
    return float(np.sum(np.abs(F) * np.exp(alpha * L * w)))


def contraction_pairs(res):
    hist = [rec.residual_F for rec in res.trace]
    # pairs (r, r+1) for r >= 1
    return [(hist[r], hist[r + 1]) for r in range(1, len(hist) - 1)]


def contraction_holds(pairs, C=1.0, exponent=1.4):
    return all(math.log(b) <= exponent * math.log(a) + math.log(C) for a, b in pairs if a > 0 and b > 0)


# 1 ---------------------------------------------------------------------------------------


def test_criterion_1_headline_solve():
    cfg = headline_config()
    res, wall = timed_run("head-1e-3", cfg)
    last = res.trace[-1]
    F, grids = grid_residual(res.state.q, cfg.lam, res.state.lambda_prime, cfg.epsilon, cfg.f, cfg.resonant)
    oracle = weighted_sum(F, grids, cfg.alpha, scheduled_width(cfg.L0, last.step))
    steps = len(res.trace) - 1
    head_ok = (res.verdict == "converged" and last.residual_F < 1e-12 and oracle < 1e-12 and steps <= 6
               and wall < 60 and last.N <= 16 and contraction_holds(contraction_pairs(res)))
    # exact plane wave: q stays the initial mode, lambda' = lambda + eps a^2
    exact_ok = (res.state.q.embed(4).allclose(initial_field(cfg), atol=0)
                and abs(res.state.lambda_prime[0] - (GOLDEN + 1e-3 * 0.01)) < 1e-15)

    two = two_mode_config(0.05)
    res2, wall2 = timed_run("two-0.05", two)
    pairs = contraction_pairs(res2)
    F2, grids2 = grid_residual(res2.state.q, two.lam, res2.state.lambda_prime, two.epsilon, two.f, two.resonant)
    oracle2 = weighted_sum(F2, grids2, two.alpha, scheduled_width(two.L0, res2.trace[-1].step))
    two_ok = (res2.verdict == "converged" and res2.trace[-1].residual_F < 1e-12 and oracle2 < 1e-12
              and len(pairs) >= 2 and contraction_holds(pairs))
    hist = ", ".join(f"{r.residual_F:.2e}" for r in res2.trace)
    ok = report(
        "criterion 1 headline solve",
        head_ok and exact_ok and two_ok,
        f"headline: {steps} steps, residual {last.residual_F:.2e}, grid oracle {oracle:.2e}, N={last.N}, "
        f"{wall:.2f}s, 0 contraction pairs; two-frequency eps=0.05: residuals [{hist}], "
        f"{len(pairs)} pairs with C=1, grid oracle {oracle2:.2e}, {wall2:.1f}s",
    )
    assert ok


# 2 ---------------------------------------------------------------------------------------


def stable(a, b, tol=0.2):
    if a == b:
        return True
    return abs(a - b) <= tol * max(abs(a), abs(b))


def test_criterion_2_theorem_claims():
    details, ok = [], True
    for label, make in (("headline", headline_config), ("two-frequency", two_mode_config)):
        Ks, Kps = [], []
        for eps in (1e-3, 1e-4):
            cfg = make(eps)
            res, _ = timed_run(f"{label}-{eps}", cfg)
            ok &= res.verdict == "converged"
            q = res.state.q
            # (i) pinned amplitudes, exactly
            ok &= all(q[m] == a for m, a in zip(cfg.resonant.modes, cfg.amplitudes))
            K = res.claims["K"]
            drift = float(np.max(np.abs(np.asarray(res.state.lambda_prime) - np.asarray(cfg.lam))))
            ok &= drift <= K * eps * (1 + 1e-9) + 1e-15
            # (iii) decay sum recomputed here at width L0 / 2 over x outside R
            coords = q.coords()
            off = ~resonant_mask(coords, cfg.resonant)
            w = np.sum(np.abs(coords) ** (1 / cfg.alpha), axis=1)
            dsum = float(np.sum(np.abs(q.coeffs.ravel()[off]) * np.exp(cfg.alpha * cfg.L0 / 2 * w[off])))
            ok &= math.isclose(dsum, res.claims["decay_sum"], rel_tol=1e-9, abs_tol=1e-300)
            Ks.append(K)
            Kps.append(dsum / eps)
        ok &= stable(*Ks) and stable(*Kps)
        details.append(f"{label}: K={Ks[0]:.5g}/{Ks[1]:.5g}, K'={Kps[0]:.5g}/{Kps[1]:.5g}")
    # the plane wave is exact: K = a^2
    ok &= math.isclose(_RUNS["headline-0.001"][0].claims["K"], 0.01, rel_tol=1e-9)
    assert report("criterion 2 theorem claims", ok, "; ".join(details))


# 3 ---------------------------------------------------------------------------------------


def test_criterion_3_reality_and_pairing():
    keys = ["head-1e-3", "two-0.05"]
    for key, cfg in (("head-1e-3", headline_config()), ("two-0.05", two_mode_config(0.05))):
        timed_run(key, cfg)
    worst_imag = worst_lam = worst_pair = 0.0
    steps = 0
    for key in keys:
        for rec in _RUNS[key][0].trace:
            steps += 1
            worst_imag = max(worst_imag, rec.max_imag_q)
            worst_lam = max(worst_lam, rec.max_imag_lambda)
            worst_pair = max(worst_pair, rec.pairing_defect)
    ok = worst_imag <= 1e-12 and worst_lam <= 1e-12 and worst_pair <= 1e-10
    assert report("criterion 3 reality and pairing", ok,
                  f"{steps} steps: max|Im q|={worst_imag:.1e}, max|Im lambda'|={worst_lam:.1e}, "
                  f"pairing defect={worst_pair:.1e}")


# 4 ---------------------------------------------------------------------------------------


def test_criterion_4_gevrey_calculus():
    sub = verify.submultiplicativity(seed=2024, trials=1000)
    chain = verify.norm_chain(seed=2025, trials=100)
    ok = sub.passed and chain.passed
    d = chain.details
    assert report(
        "criterion 4 Gevrey calculus",
        ok,
        f"submultiplicativity {sub.violations}/1000 (max ratio {sub.details['max_ratio']:.16f}); "
        f"chain lower {d['lower_violations']}/100, upper {d['upper_violations']}/100; "
        f"decay {d['decay_violations']}/100 with constant h^D (max ratio {d['max_decay_ratio']:.3f})",
    )


@pytest.mark.xfail(strict=True, reason="the (h/2pi)^D decay constant is too small by (2pi)^D; a plane wave violates it")
def test_criterion_4_decay_with_2pi_constant():
    printed = verify.norm_chain(seed=2025, trials=100, convention="2pi")
    line = (f"criterion 4 decay bound with (h/2pi)^D constant: {printed.details['decay_violations']}/100 violations "
            f"(max ratio {printed.details['max_decay_ratio']:.1f}); expected failure, recorded in the notes")
    print(line)
    ACCEPTANCE_LINES.append("INFO " + line)
    assert printed.details["decay_violations"] == 0


# 5 ---------------------------------------------------------------------------------------


def test_criterion_5_small_divisor_measure():
    R = ResonantSet([(1,)])
    gammas = [0.005, 0.01, 0.02, 0.04, 0.08]
    fr = [excluded_measure_mc(DiophantineSpec(g, 3.0, 8), R, 100_000, 17) for g in gammas]
    slope = float(np.polyfit(np.log(gammas), np.log(fr), 1)[0])
    rem = remove_intervals([(0.0, 1.0)], M=2, N=8, gamma=0.05, tau=3.0)
    bad = verify_kept(rem, M=2, N=8, gamma=0.05, tau=3.0, fine_per_cell=16)
    ok = 0.8 <= slope <= 1.2 and bad == 0
    assert report("criterion 5 small-divisor measure", ok,
                  f"fractions {', '.join(f'{x:.4f}' for x in fr)}; log-log slope {slope:.3f}; "
                  f"interval removal K={rem.K:.4f}, kept-cell violations {bad}")


# 6 ---------------------------------------------------------------------------------------


def test_criterion_6_matrix_machinery():
    res = verify.resolvent_suite(seed=31, trials=1000, tol=1e-9)
    pert = verify.perturbation_suite(seed=32, trials=1000)
    neu = verify.neumann_suite(seed=33, trials=1000)
    mk = verify.markov_suite(seed=34, trials=1000)
    part = verify.partition_suite(seed=35, trials=50)
    ok = all(s.passed for s in (res, pert, neu, mk, part)) and pert.trials == 1000
    assert report(
        "criterion 6 matrix machinery",
        ok,
        f"resolvent {res.violations}/1000 (max scaled defect {res.details['max_scaled_defect']:.1e}); "
        f"perturbation {pert.violations}/{pert.trials} (min margins {pert.details['min_norm_margin']:.2f}, "
        f"{pert.details['min_decay_margin']:.2f}); Neumann {neu.violations}/1000; Markov {mk.violations}/1000; "
        f"partition separation {part.violations}/50, fitted C0={part.details['fitted_C0_d1']:.3f}",
    )


# 7 ---------------------------------------------------------------------------------------


def test_criterion_7_coupling_surrogate():
    suite = verify.coupling_suite(seed=0, trials=200, min_fraction=0.95)
    d = suite.details
    assert report("criterion 7 coupling surrogate", suite.passed,
                  f"pass fraction {d['pass_fraction']:.3f} over 200 trials, hypotheses met {d['hypotheses_met']}, "
                  f"min fitted L {d['min_fitted_L']:.4f} vs planted {d['planted_L']}")


# 8 ---------------------------------------------------------------------------------------


def test_criterion_8_rejection_path(tmp_path):
    code = cli.main(["run", "--config", os.path.join(CONFIGS, "resonant.conf"), "--out", str(tmp_path)])
    s = json.loads((tmp_path / "summary.json").read_text())
    planted = {"n": [-1], "k": [2], "value": 0.0}
    cli_ok = code == cli.EXIT_REJECTED and s["error"] == "SmallDivisorFailure" and planted in s["violations"]
    # the same resonance with the pre-filter off is caught by the conditioning gate in the solve
    cfg = NewtonConfig(modes=((1,), (-2,)), amplitudes=(0.1, 0.1), lam=(0.5, 0.7320508), epsilon=1e-6,
                       dc_filter=False, gamma=1e-4, schedule=Schedule(N0=3, growth=1.5, N_max=5, max_steps=4),
                       diagnostics_max_dim=0)
    res = run(cfg)
    solve_ok = res.verdict == "rejected" and res.error == "SmallDivisorFailure" and res.violations
    assert report("criterion 8 rejection path", cli_ok and solve_ok,
                  f"CLI exit {code}, {len(s['violations'])} violations incl. 2 lambda = mu_(-1); "
                  f"unfiltered solve: {res.message}")
