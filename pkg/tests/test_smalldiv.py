import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpnls.errors import ConfigurationError
from qpnls.field import nls_multiplier
from qpnls.lattice import ResonantSet
from qpnls.smalldiv import (
    DiophantineSpec,
    certified_grid_exponent,
    dc_check,
    dc_prime_check,
    excluded_measure_mc,
    remove_intervals,
    spatial_horizon,
    verify_kept,
    worst_divisor,
)


def brute_dc(lam, gamma, C, N, R):
    """Independent double loop over n and k with mu_n = |n|^2 off the resonant modes."""
    lam = float(lam)
    res = {m.vector: j for j, m in enumerate(R.modes)}
    bad = []
    nmax = int(math.isqrt(spatial_horizon(N, 1))) + 1
    for n in range(-nmax, nmax + 1):
        mu = lam if (n, 1) in res else float(n * n)
        for k in range(-N + 1, N):
            if (n, k) in res or (n == 0 and k == 0 and (0, 1) not in res):
                continue
            v = k * lam - mu
            if abs(v) <= gamma * (1 + abs(k)) ** (-C):
                bad.append(((n,), (k,), v))
    return sorted(bad)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        DiophantineSpec(-0.1, 3, 4)
    with pytest.raises(ConfigurationError):
        DiophantineSpec(0.1, 3, 0)
    with pytest.raises(ConfigurationError):
        DiophantineSpec(0.1, 2, 4).validate_for(1, 1)
    DiophantineSpec(0.1, 2.5, 4).validate_for(1, 1)


def test_dc_half_frequency_hits_mu_one():
    # 2 * 0.5 = 1 = mu_{+-1}
    R = ResonantSet([(2,)])
    ok, viol = dc_check([0.5], DiophantineSpec(0.01, 3, 3), nls_multiplier([0.5], R), R)
    assert not ok
    assert viol == [((-1,), (2,), 0.0), ((1,), (2,), 0.0)]


def test_dc_forced_resonance_listed():
    # 3 lambda = 4 = mu_2
    lam = 4 / 3
    R = ResonantSet([(1,)])
    ok, viol = dc_check([lam], DiophantineSpec(1e-3, 3, 4), nls_multiplier([lam], R), R)
    assert not ok
    assert ((2,), (3,)) in [(n, k) for n, k, _ in viol]


def test_dc_gamma_zero_passes():
    lam = math.sqrt(2) - 1
    R = ResonantSet([(1,)])
    ok, viol = dc_check([lam], DiophantineSpec(0.0, 3, 10), nls_multiplier([lam], R), R)
    assert ok and viol == []


@given(st.floats(0.05, 0.95), st.floats(1e-4, 0.05), st.integers(2, 8), st.integers(-2, 2))
@settings(deadline=None, max_examples=60)
def test_dc_matches_double_loop(lam, gamma, N, n1):
    R = ResonantSet([(n1,)])
    _, viol = dc_check([lam], DiophantineSpec(gamma, 3, N), nls_multiplier([lam], R), R)
    ref = brute_dc(lam, gamma, 3, N, R)
    assert [(n, k) for n, k, _ in viol] == [(n, k) for n, k, _ in ref]
    for (_, _, a), (_, _, b) in zip(viol, ref):
        assert a == pytest.approx(b, abs=1e-12)


def test_worst_divisor_agrees_with_check():
    lam = (math.sqrt(5) - 1) / 2
    R = ResonantSet([(1,)])
    mu = nls_multiplier([lam], R)
    worst, n, k = worst_divisor([lam], DiophantineSpec(0.01, 3, 8), mu, R)
    assert worst > 0
    assert dc_check([lam], DiophantineSpec(worst * 0.999, 3, 8), mu, R)[0]
    assert not dc_check([lam], DiophantineSpec(worst * 1.001, 3, 8), mu, R)[0]


def test_dc_prime_examples():
    assert dc_prime_check([math.sqrt(2) - 1], 1e-3, 2, 20)
    # k = (2, -1) gives k . lambda' = 0
    assert not dc_prime_check([0.25, 0.5], 1e-3, 3, 4)
    assert dc_prime_check([0.123], 1e-3, 2, 1)
    with pytest.raises(ConfigurationError):
        dc_prime_check([0.3], 1e-3, 1.0, 5)


def test_dc_prime_threshold_is_strict():
    # |k lambda'| = gamma (1+|k|)^-tau exactly at k = 1
    lp, tau = 0.01, 2.0
    assert not dc_prime_check([lp], lp * 4, tau, 2)
    assert dc_prime_check([lp], lp * 4 * (1 - 1e-9), tau, 2)


def test_remove_intervals_example():
    gamma, M, N, tau = 0.05, 2, 8, 3.0
    out = remove_intervals([(0.0, 1.0)], M, N, gamma, tau)
    assert 0 < out.removed_measure <= out.total_measure
    assert out.bound_shape == pytest.approx(gamma * M**-2)
    assert out.K == pytest.approx(0.04129464285714283, rel=1e-9)
    assert verify_kept(out, M, N, gamma, tau) == 0
    # lambda = 0 is an exact resonance for every k, its cell must go
    assert all(box[0][0] > 0 for box in out.kept)


def test_remove_intervals_gamma_limit():
    out = remove_intervals([(0.1, 0.9)], 2, 8, 1e-14, 3.0, grid_exponent=3.0)
    assert out.removed_measure == 0.0
    assert out.kept == [((0.1, 0.9),)]


def test_remove_intervals_two_dims():
    out = remove_intervals([(0.0, 1.0), (0.0, 1.0)], 1, 3, 0.3, 3.0)
    assert out.removed_measure > 0
    assert verify_kept(out, 1, 3, 0.3, 3.0, fine_per_cell=2) == 0
    # a coarse uncertified grid keeps cells that straddle a resonance line
    coarse = remove_intervals([(0.0, 1.0), (0.0, 1.0)], 1, 3, 0.3, 3.0, grid_exponent=2.0)
    assert verify_kept(coarse, 1, 3, 0.3, 3.0, fine_per_cell=2) > 0


def test_remove_intervals_errors():
    with pytest.raises(ConfigurationError):
        remove_intervals([(0, 1)] * 3, 1, 4, 0.05, 4.0, grid_exponent=1.0)
    with pytest.raises(ConfigurationError):
        certified_grid_exponent(8, 0.0, 3.0, 1)


@given(st.integers(4, 10), st.floats(0.01, 0.1), st.floats(1.5, 3))
@settings(deadline=None, max_examples=20)
def test_kept_cells_satisfy_condition(N, gamma, tau):
    out = remove_intervals([(0.0, 1.0)], 1, N, gamma, tau)
    assert verify_kept(out, 1, N, gamma, tau, fine_per_cell=4) == 0


def test_mc_examples():
    R = ResonantSet([(1,)])
    assert excluded_measure_mc(DiophantineSpec(0.0, 3, 8), R, 10_000, 1) == 0.0
    frac = excluded_measure_mc(DiophantineSpec(0.02, 3, 8), R, 100_000, 7)
    assert frac <= 10 * 0.02
    assert excluded_measure_mc(DiophantineSpec(0.02, 3, 8), R, 1000, 5) == \
        excluded_measure_mc(DiophantineSpec(0.02, 3, 8), R, 1000, 5)
    with pytest.raises(ConfigurationError):
        excluded_measure_mc(DiophantineSpec(0.02, 3, 8), R, 0, 5)


def test_mc_vectorized_matches_per_sample_scan():
    R = ResonantSet([(1,)])
    spec = DiophantineSpec(0.05, 3, 6)
    fast = excluded_measure_mc(spec, R, 2000, 11)
    slow = excluded_measure_mc(spec, R, 2000, 11, mu_factory=lambda l: nls_multiplier(l, R))
    assert fast == slow


def test_mc_vectorized_matches_per_sample_scan_two_freqs():
    R = ResonantSet([(1,), (-2,)])
    spec = DiophantineSpec(0.05, 4, 3)
    fast = excluded_measure_mc(spec, R, 300, 2)
    slow = excluded_measure_mc(spec, R, 300, 2, mu_factory=lambda l: nls_multiplier(l, R))
    assert fast == slow


@given(st.floats(0.001, 0.05), st.integers(2, 8), st.integers(0, 1000))
@settings(deadline=None, max_examples=20)
def test_mc_monotone(gamma, N, seed):
    R = ResonantSet([(1,)])
    base = excluded_measure_mc(DiophantineSpec(gamma, 3, N), R, 2000, seed)
    assert excluded_measure_mc(DiophantineSpec(2 * gamma, 3, N), R, 2000, seed) >= base
    assert excluded_measure_mc(DiophantineSpec(gamma, 3, N + 1), R, 2000, seed) >= base
