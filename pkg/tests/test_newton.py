import dataclasses
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpnls import newton
from qpnls.errors import ConfigurationError, RealityViolation
from qpnls.field import FourierField
from qpnls.lattice import Region, ResonantSet, project_field, resonant_mask
from qpnls.newton import (
    NewtonConfig,
    Schedule,
    initial_field,
    initial_state,
    newton_step,
    q_equation_update,
    residual,
    run,
    scheduled_width,
    summary_dict,
    dumps_summary,
    write_trace_csv,
)
from qpnls.nonlinearity import PowerSeries

GOLDEN = 0.6180339887498949


def two_mode_config(**kw):
    base = dict(modes=((1,), (-2,)), amplitudes=(0.1, 0.1), lam=(0.41421356, 0.7320508), epsilon=0.01,
                gamma=1e-4, schedule=Schedule(N0=3, growth=1.5, N_max=5, max_steps=4), diagnostics_max_dim=0)
    base.update(kw)
    return NewtonConfig(**base)


def test_schedule_radii():
    s = Schedule(N0=4, growth=2.0, N_max=16)
    assert [s.radius(r) for r in range(5)] == [4, 8, 16, 16, 16]
    assert [Schedule(N0=3, growth=1.5, N_max=7).radius(r) for r in range(3)] == [3, 5, 7]
    with pytest.raises(ConfigurationError):
        Schedule(N0=5, N_max=4)
    with pytest.raises(ConfigurationError):
        Schedule(growth=1.0)


def test_scheduled_width_limits():
    assert scheduled_width(1.0, 0) == 1.0
    assert scheduled_width(1.0, 10_000) == pytest.approx(0.5, abs=1e-4)
    widths = [scheduled_width(2.0, r) for r in range(10)]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        NewtonConfig(modes=((1,),), amplitudes=(0.0,), lam=(0.3,), epsilon=1e-3)
    with pytest.raises(ConfigurationError):
        NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(1.3,), epsilon=1e-3)
    with pytest.raises(ConfigurationError):
        NewtonConfig(modes=((4,),), amplitudes=(0.1,), lam=(0.3,), epsilon=1e-3)
    with pytest.raises(ConfigurationError):
        NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(0.3,), epsilon=1e-3, dc_exponent=2.0)


def test_residual_examples():
    R = ResonantSet([(1,)])
    cfg = NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(GOLDEN,), epsilon=0.0)
    q0 = initial_field(cfg)
    F, _ = residual(q0, cfg.lam, cfg.lam, 0.0, cfg.f, R)
    assert F.max_abs() == 0.0
    F, _ = residual(FourierField.zeros(1, 1, 3), cfg.lam, cfg.lam, 1e-3, cfg.f, R)
    assert F.max_abs() == 0.0
    a, eps = 0.1, 1e-3
    F, _ = residual(q0, cfg.lam, cfg.lam, eps, PowerSeries.cubic_nls(), R)
    assert project_field(F, Region.Q, R)[(1, 1)] == pytest.approx(-eps * a**3, rel=1e-13)
    assert project_field(F, Region.P, R).max_abs() == 0.0


def test_q_update_examples():
    R = ResonantSet([(1,)])
    a, eps = 0.1, 1e-3
    q0 = FourierField.from_modes({(1, 1): a}, 1, 1, 3)
    assert q_equation_update(q0, [0.3], eps, PowerSeries((0, 1)), [a], R)[0] == pytest.approx(0.3 + eps)
    assert q_equation_update(q0, [0.3], eps, PowerSeries.cubic_nls(), [a], R)[0] == pytest.approx(0.3 + eps * a**2)
    assert q_equation_update(q0, [0.3], 0.0, PowerSeries.cubic_nls(), [a], R)[0] == 0.3


def test_q_update_detects_complex_input():
    R = ResonantSet([(1,)])
    q = FourierField.from_modes({(1, 1): 0.1 + 0.01j, (0, 1): 0.05}, 1, 1, 3)
    with pytest.raises(RealityViolation):
        q_equation_update(q, [0.3], 0.1, PowerSeries.cubic_nls(), [0.1], R)


def test_zero_residual_step_keeps_state():
    cfg = NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(GOLDEN,), epsilon=0.0)
    s0 = initial_state(cfg)
    s1 = newton_step(s0, cfg)
    assert s1.r == 1
    assert s1.q.embed(s0.q.radius).allclose(s0.q)
    assert s1.trace[-1].dq_F == 0.0
    assert np.array_equal(s1.lambda_prime, s0.lambda_prime)


def test_run_epsilon_zero():
    cfg = NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(GOLDEN,), epsilon=0.0)
    res = run(cfg)
    assert res.verdict == "converged" and len(res.trace) == 1
    assert res.state.q.allclose(initial_field(cfg))
    assert tuple(res.state.lambda_prime) == cfg.lam


def test_run_headline_case():
    cfg = NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(GOLDEN,), epsilon=1e-3,
                       schedule=Schedule(N0=4, N_max=16, max_steps=6))
    res = run(cfg)
    assert res.verdict == "converged"
    assert res.trace[-1].residual_F < 1e-12
    assert res.claims["pinned_amplitudes"]
    assert res.claims["K"] == pytest.approx(0.01, rel=1e-9)
    assert res.claims["K"] <= res.claims["K_budget_bound"]


def test_run_rejects_resonance():
    cfg = NewtonConfig(modes=((1,),), amplitudes=(0.1,), lam=(0.5,), epsilon=1e-3)
    res = run(cfg)
    assert res.verdict == "rejected"
    # 2 lambda = 1 = mu_{-1}
    assert ((-1,), (2,), 0.0) in [(n, k, v) for n, k, v in res.violations]
    s = summary_dict(res, cfg)
    assert s["violations"][0].keys() == {"n", "k", "value"}


def test_run_rejects_ill_conditioned_solve():
    cfg = two_mode_config(schedule=Schedule(N0=3, growth=1.5, N_max=5, max_steps=4, B_max=1.0))
    res = run(cfg)
    assert res.verdict == "rejected"
    assert "B_max" in res.message
    assert res.violations and res.violations[0]["B_max"] == 1.0


def test_divergence_guard(monkeypatch):
    cfg = two_mode_config()
    real_step = newton.newton_step

    def worse(state, c):
        new = real_step(state, c)
        rec = dataclasses.replace(new.trace[-1], residual_F=10.0 ** new.r)
        new.trace[-1] = rec
        return new

    monkeypatch.setattr(newton, "newton_step", worse)
    res = newton.run(cfg)
    assert res.verdict == "max_steps" and res.flagged


@pytest.fixture(scope="module")
def two_mode_run():
    return run(two_mode_config())


def test_two_mode_invariants(two_mode_run):
    res = two_mode_run
    cfg = two_mode_config()
    R = cfg.resonant
    assert res.verdict == "converged"
    assert len(res.trace) >= 2
    for rec in res.trace:
        assert rec.max_imag_q <= 1e-12
        assert rec.pairing_defect <= 1e-10
    q = res.state.q
    for m, a in zip(R.modes, cfg.amplitudes):
        assert q[m] == a
    assert q.radius == res.trace[-1].N
    # decay claim sum is taken over x outside R only
    off = ~resonant_mask(q.coords(), R)
    assert res.claims["decay_sum"] >= float(np.sum(np.abs(q.coeffs.ravel()[off])))


def test_two_mode_contraction(two_mode_run):
    hist = [rec.residual_F for rec in two_mode_run.trace]
    assert hist[-1] < 1e-12
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_trace_and_summary_outputs(two_mode_run):
    cfg = two_mode_config()
    buf = io.StringIO()
    write_trace_csv(two_mode_run.trace, buf, 2)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ("step,N,residual_F,dq_F,lambda_prime_1,lambda_prime_2,"
                        "inv_norm,decay_B,decay_L,tail,ms")
    assert len(lines) == len(two_mode_run.trace) + 1
    text = dumps_summary(summary_dict(two_mode_run, cfg))
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data["verdict"] == "converged"
    assert text == dumps_summary(json.loads(text))


@given(st.floats(0.0, 1e-3), st.floats(0.05, 0.2))
@settings(deadline=None, max_examples=10)
def test_plane_wave_drift(eps, a):
    # a single mode is an exact solution with lambda' = lambda + eps a^2
    cfg = NewtonConfig(modes=((2,),), amplitudes=(a,), lam=(GOLDEN,), epsilon=eps, dc_filter=False,
                       schedule=Schedule(N0=3, N_max=6))
    res = run(cfg)
    assert res.verdict == "converged"
    # drift is lambda' - lambda, so the error is a few ulps of lambda
    assert res.claims["drift"] == pytest.approx(eps * a**2, rel=1e-9, abs=1e-15)
    assert res.claims["decay_sum"] == 0.0
