"""Newton iteration for the lattice equations of the quasi-periodic NLS.

Unknowns are the Fourier coefficients q_hat(n, k) off the resonant set R
(q_hat is pinned to a_j on R) and the frequency vector lambda'. The residual

    F_hat(n, k) = (k . lambda' - mu_n) q_hat(n, k) - eps (dH/dqbar)^(n, k)

splits into the Q-part (on R), which is solved explicitly for lambda', and the
P-part, which is linearized and solved on a growing box B(0, N_r).
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, RealityViolation, SmallDivisorFailure
from .field import FourierField, apply_multiplier, conjugate_field, nls_multiplier, theta_derivative
from .gevrey import GevreyWeight, f_norm, field_alpha_weights
from .lattice import MAX_DIM, Region, ResonantSet, project_field, resonant_mask
from .linop import DEFAULT_B_MAX, SolveDiagnostics, assemble_T, invert_with_decay_fit, solve_homological
from .nonlinearity import DEFAULT_BUDGET, PowerSeries, hamiltonian_terms, series_derivative

IMAG_DUST = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Truncation radii N_r = round(N0 A^r), capped at N_max."""

    N0: int = 4
    growth: float = 2.0
    max_steps: int = 8
    residual_tol: float = 1e-12
    B_max: float = DEFAULT_B_MAX
    N_max: int = 32

    def __post_init__(self):
        if self.N0 < 1 or self.N_max < self.N0:
            raise ConfigurationError(f"need 1 <= N0 <= N_max, got N0={self.N0}, N_max={self.N_max}")
        if not self.growth > 1:
            raise ConfigurationError(f"growth must exceed 1, got {self.growth}")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be non-negative")

    def radius(self, r: int) -> int:
        return int(min(math.floor(self.N0 * self.growth**r + 0.5), self.N_max))


def scheduled_width(L0: float, r: int) -> float:
    """L_r = L0 (1 - (3/pi^2) sum_{j<=r} 1/j^2), decreasing to L0/2."""
    s = sum(1.0 / j**2 for j in range(1, r + 1))
    return L0 * (1.0 - 3.0 * s / math.pi**2)


@dataclass(frozen=True)
class NewtonConfig:
    """Problem data and solver settings for one parameter point."""

    modes: tuple
    amplitudes: tuple
    lam: tuple
    epsilon: float
    f: PowerSeries = dc_field(default_factory=PowerSeries.cubic_nls)
    alpha: float = 2.0
    L0: float = 1.0
    schedule: Schedule = dc_field(default_factory=Schedule)
    gamma: float = 0.01
    dc_exponent: float | None = None
    dc_filter: bool = True
    budget: float = DEFAULT_BUDGET
    diagnostics_max_dim: int = 2500
    record_timing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(tuple(int(v) for v in n) for n in self.modes))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        R = self.resonant
        if R.d > MAX_DIM or R.b > MAX_DIM:
            raise ConfigurationError(f"d and b are capped at {MAX_DIM}")
        if len(self.amplitudes) != R.b or len(self.lam) != R.b:
            raise ConfigurationError("amplitudes and lambda need one entry per resonant mode")
        if any(not a > 0 for a in self.amplitudes):
            raise ConfigurationError("amplitudes must be positive")
        if any(not 0.0 <= v <= 1.0 for v in self.lam):
            raise ConfigurationError("lambda must lie in [0, 1]^b")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")
        GevreyWeight(self.alpha, self.L0)
        reach = max(max((abs(v) for v in n), default=0) for n in self.modes)
        if self.schedule.N0 <= max(reach, 1):
            raise ConfigurationError(f"N0 must exceed the sup-norm of the resonant sites ({max(reach, 1)})")
        if self.dc_exponent is not None and not self.dc_exponent > R.b + R.d:
            raise ConfigurationError("dc_exponent must exceed b + d")

    @property
    def resonant(self) -> ResonantSet:
        return ResonantSet(self.modes)

    @property
    def d(self) -> int:
        return len(self.modes[0])

    @property
    def b(self) -> int:
        return len(self.modes)

    @property
    def C(self) -> float:
        return float(self.d + self.b + 1) if self.dc_exponent is None else float(self.dc_exponent)

    @property
    def multiplier(self):
        return nls_multiplier(self.lam, self.resonant)


@dataclass(frozen=True)
class StepRecord:
    step: int
    N: int
    residual_F: float
    residual_P: float
    residual_Q: float
    dq_F: float
    lambda_prime: tuple
    inv_norm: float
    decay_B: float
    decay_L: float
    tail: float
    ms: float
    condition: float
    backward_error: float
    pairing_defect: float
    max_imag_q: float
    max_imag_lambda: float


@dataclass
class NewtonState:
    q: FourierField
    lam: np.ndarray
    lambda_prime: np.ndarray
    r: int
    N: int
    trace: list = dc_field(default_factory=list)
    dH: FourierField | None = dc_field(default=None, repr=False)


@dataclass
class RunResult:
    state: NewtonState | None
    trace: list
    verdict: str
    claims: dict
    violations: list
    message: str = ""
    flagged: bool = False
    error: str | None = None


def initial_field(cfg: NewtonConfig) -> FourierField:
    """q_0 with q_hat(n_j, e_j) = a_j and zero elsewhere, on B(0, N0)."""
    modes = {m.vector: a for m, a in zip(cfg.resonant.modes, cfg.amplitudes)}
    return FourierField.from_modes(modes, cfg.d, cfg.b, cfg.schedule.N0)


def residual(
    q: FourierField,
    lam: Sequence[float],
    lambda_prime: Sequence[float],
    epsilon: float,
    f: PowerSeries,
    R: ResonantSet,
    out_box=None,
    budget: float = DEFAULT_BUDGET,
    dH: FourierField | None = None,
):
    """Full residual field and the l1 mass dropped by truncation.

    Returns ``(F, dropped)``; with ``out_box=None`` the exact support is kept.
    A precomputed ``dH`` (dH/dqbar at q) may be passed to skip its evaluation.
    """
    mu = nls_multiplier(lam, R)
    lin = theta_derivative(q, lambda_prime) - apply_multiplier(q, mu)
    dropped = 0.0
    if epsilon == 0.0:
        F = lin
    else:
        if dH is None:
            t = hamiltonian_terms(q, f, out_box=None, budget=budget, second=False)
            dH, dropped = t.dH_dqbar, t.dropped
        F = lin - epsilon * dH
    if out_box is not None:
        radius = getattr(out_box, "radius", out_box)
        dropped += F.mass_outside(radius)
        F = F.embed(radius)
    if F.real_flag and np.iscomplexobj(F.coeffs):
        F = F.real_part()
    return F, dropped


def q_equation_update(
    q: FourierField,
    lam: Sequence[float],
    epsilon: float,
    f: PowerSeries,
    amplitudes: Sequence[float],
    R: ResonantSet,
    budget: float = DEFAULT_BUDGET,
    dH: FourierField | None = None,
) -> np.ndarray:
    """lambda'_j = lambda_j + (eps / a_j) (dH/dqbar)^(n_j, e_j).

    Raises
    ------
    RealityViolation
        If the update has an imaginary part above 1e-12.
    """
    lam = np.asarray(lam, dtype=float)
    if epsilon == 0.0:
        return lam.copy()
    if dH is None:
        dH = hamiltonian_terms(q, f, budget=budget, second=False).dH_dqbar
    vals = np.array([dH[m] for m in R.modes])
    upd = lam + epsilon * vals / np.asarray(amplitudes, dtype=float)
    if np.max(np.abs(np.imag(upd)), initial=0.0) > IMAG_DUST:
        raise RealityViolation(f"frequency update is not real: {upd}")
    return np.real(upd).astype(float)


def _nonlinear(q: FourierField, cfg: NewtonConfig) -> FourierField | None:
    if cfg.epsilon == 0.0:
        return None
    return hamiltonian_terms(q, cfg.f, budget=cfg.budget, second=False).dH_dqbar


def _residual_parts(q, cfg: NewtonConfig, lambda_prime, r: int, dH=None):
    R = cfg.resonant
    F, dropped = residual(q, cfg.lam, lambda_prime, cfg.epsilon, cfg.f, R, budget=cfg.budget, dH=dH)
    w = GevreyWeight(cfg.alpha, scheduled_width(cfg.L0, r))
    N_box = cfg.schedule.N_max
    p_box = project_field(F, Region.P_BOX, R, N_box)
    res_p = f_norm(p_box, w)
    res_q = f_norm(project_field(F, Region.Q, R), w)
    tail = f_norm(project_field(F, Region.P, R), w) - res_p + dropped
    return F, res_p, res_q, max(tail, 0.0)


def _record(state: NewtonState, cfg, F_parts, dq_F=0.0, inv_norm=math.nan, fit=None, ms=0.0,
            condition=math.nan, backward=math.nan, pairing=0.0, lam_imag=0.0) -> StepRecord:
    _, res_p, res_q, tail = F_parts
    return StepRecord(
        step=state.r,
        N=state.N,
        residual_F=res_p + res_q,
        residual_P=res_p,
        residual_Q=res_q,
        dq_F=dq_F,
        lambda_prime=tuple(float(v) for v in state.lambda_prime),
        inv_norm=inv_norm,
        decay_B=fit.B if fit is not None else math.nan,
        decay_L=fit.L_fit if fit is not None else math.nan,
        tail=tail,
        ms=ms if cfg.record_timing else 0.0,
        condition=condition,
        backward_error=backward,
        pairing_defect=pairing,
        max_imag_q=state.q.max_abs_imag(),
        max_imag_lambda=lam_imag,
    )


def initial_state(cfg: NewtonConfig) -> NewtonState:
    q0 = initial_field(cfg)
    dH = _nonlinear(q0, cfg)
    lp = q_equation_update(q0, cfg.lam, cfg.epsilon, cfg.f, cfg.amplitudes, cfg.resonant, cfg.budget, dH)
    state = NewtonState(q0, np.array(cfg.lam), lp, 0, cfg.schedule.N0, dH=dH)
    state.trace.append(_record(state, cfg, _residual_parts(q0, cfg, lp, 0, dH)))
    return state


def newton_step(state: NewtonState, cfg: NewtonConfig) -> NewtonState:
    """One Newton step: solve the truncated homological equation on B(0, N_{r+1}).

    Raises
    ------
    SmallDivisorFailure
        From the linear solve (condition estimate above B_max or singular).
    """
    t0 = time.perf_counter()
    R = cfg.resonant
    r_next = state.r + 1
    N_next = cfg.schedule.radius(r_next)
    dH = state.dH if state.dH is not None else _nonlinear(state.q, cfg)
    F, _ = residual(state.q, cfg.lam, state.lambda_prime, cfg.epsilon, cfg.f, R, budget=cfg.budget, dH=dH)
    rhs_plus = -project_field(F, Region.P_BOX, R, N_next)
    rhs_minus = -project_field(conjugate_field(F), Region.PPRIME_BOX, R, N_next)
    T = assemble_T(state.q, cfg.f, cfg.epsilon, N_next, R, state.lambda_prime, cfg.multiplier, cfg.budget)
    if rhs_plus.max_abs() == 0.0 and rhs_minus.max_abs() == 0.0:
        # nothing to correct; T may be singular at the trivial (0, 0) site when eps = 0
        dq = FourierField.zeros(cfg.d, cfg.b, N_next)
        dq_bar = dq
        diag = SolveDiagnostics(math.nan, math.nan, 0.0)
    else:
        dq, dq_bar, diag = solve_homological(T, rhs_plus, rhs_minus, cfg.schedule.B_max)
    pairing = dq_bar.embed(N_next) - conjugate_field(dq).embed(N_next)
    pairing_defect = pairing.max_abs()
    if np.iscomplexobj(dq.coeffs) and dq.max_abs_imag() <= IMAG_DUST:
        dq = dq.real_part()
    q_new = state.q.embed(N_next) + dq
    if np.iscomplexobj(q_new.coeffs) and q_new.max_abs_imag() <= IMAG_DUST:
        q_new = q_new.real_part()
    dH_new = _nonlinear(q_new, cfg)
    lp = q_equation_update(q_new, cfg.lam, cfg.epsilon, cfg.f, cfg.amplitudes, R, cfg.budget, dH_new)
    inv_norm, fit = math.nan, None
    w_next = GevreyWeight(cfg.alpha, scheduled_width(cfg.L0, r_next))
    if T.size <= cfg.diagnostics_max_dim and not math.isnan(diag.condition):
        inv_norm, fit = invert_with_decay_fit(T, w_next)
    new = NewtonState(q_new, state.lam, lp, r_next, N_next, list(state.trace), dH=dH_new)
    parts = _residual_parts(q_new, cfg, lp, r_next, dH_new)
    ms = 1e3 * (time.perf_counter() - t0)
    new.trace.append(
        _record(new, cfg, parts, dq_F=f_norm(dq, w_next), inv_norm=inv_norm, fit=fit, ms=ms,
                condition=diag.condition, backward=diag.backward_error, pairing=pairing_defect)
    )
    return new


def theorem_claims(state: NewtonState, cfg: NewtonConfig) -> dict:
    """Pinned amplitudes, frequency drift and the decay sum at width L0/2."""
    R = cfg.resonant
    q = state.q
    pinned = all(q[m] == a for m, a in zip(R.modes, cfg.amplitudes))
    drift = float(np.max(np.abs(state.lambda_prime - np.asarray(cfg.lam))))
    coords = q.coords()
    off = ~resonant_mask(coords, R)
    wts = field_alpha_weights(q, cfg.alpha).ravel()
    decay_sum = float(np.sum(np.abs(q.coeffs.ravel()[off]) * np.exp(0.5 * cfg.alpha * cfg.L0 * wts[off])))
    eps = cfg.epsilon
    # |(dH/dqbar)^| <= sup_{|s|<=budget} |f'(s)| * ||q||_l1, divided by min a_j
    f1 = series_derivative(cfg.f)
    sup_f1 = sum(abs(c) * cfg.budget**j for j, c in enumerate(f1.coefficients))
    k_budget = sup_f1 * q.l1() / min(cfg.amplitudes)
    return {
        "pinned_amplitudes": bool(pinned),
        "drift": drift,
        "K": drift / eps if eps > 0 else 0.0,
        "K_budget_bound": k_budget,
        "decay_sum": decay_sum,
        "K_prime": decay_sum / eps if eps > 0 else 0.0,
        "max_imag_q": q.max_abs_imag(),
    }


def run(cfg: NewtonConfig) -> RunResult:
    """Iterate Newton steps until the residual drops below tolerance.

    The Diophantine pre-filter runs first when ``cfg.dc_filter`` is set; a
    failing filter or a failing linear solve yields verdict "rejected".
    Two consecutive residual increases abort with verdict "max_steps" and
    ``flagged=True``.
    """
    from .smalldiv import DiophantineSpec, dc_check

    if cfg.dc_filter and cfg.epsilon > 0:
        spec = DiophantineSpec(cfg.gamma, cfg.C, cfg.schedule.N_max)
        ok, viol = dc_check(cfg.lam, spec, cfg.multiplier, cfg.resonant)
        if not ok:
            return RunResult(None, [], "rejected", {}, viol, "Diophantine pre-filter failed",
                             error=SmallDivisorFailure.__name__)
    state = initial_state(cfg)
    sched = cfg.schedule
    while True:
        res = state.trace[-1].residual_F
        if res < sched.residual_tol:
            return RunResult(state, state.trace, "converged", theorem_claims(state, cfg), [])
        if state.r >= sched.max_steps:
            return RunResult(state, state.trace, "max_steps", theorem_claims(state, cfg), [], "step limit reached")
        hist = [rec.residual_F for rec in state.trace]
        if len(hist) >= 3 and hist[-1] > hist[-2] > hist[-3]:
            return RunResult(state, state.trace, "max_steps", theorem_claims(state, cfg), [],
                             "residual increased for 2 consecutive steps", flagged=True)
        try:
            state = newton_step(state, cfg)
        except SmallDivisorFailure as exc:
            return RunResult(state, state.trace, "rejected", {}, exc.violations or [exc.diagnostics], str(exc),
                             error=type(exc).__name__)


# output -------------------------------------------------------------------------
def trace_header(b: int) -> list:
    return (["step", "N", "residual_F", "dq_F"] + [f"lambda_prime_{j + 1}" for j in range(b)]
            + ["inv_norm", "decay_B", "decay_L", "tail", "ms"])


def write_trace_csv(trace: list, stream, b: int) -> None:
    """Trace CSV with columns step, N, residual_F, dq_F, lambda_prime_*, inv_norm, decay_B, decay_L, tail, ms."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(trace_header(b))
    for rec in trace:
        w.writerow([rec.step, rec.N, repr(rec.residual_F), repr(rec.dq_F)]
                   + [repr(v) for v in rec.lambda_prime]
                   + [repr(rec.inv_norm), repr(rec.decay_B), repr(rec.decay_L), repr(rec.tail), f"{rec.ms:.3f}"])


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def summary_dict(result: RunResult, cfg: NewtonConfig) -> dict:
    last = result.trace[-1] if result.trace else None
    return _jsonable({
        "verdict": result.verdict,
        "message": result.message,
        "error": result.error,
        "flagged": result.flagged,
        "steps": last.step if last else 0,
        "final_N": last.N if last else None,
        "final_residual": last.residual_F if last else None,
        "lambda": list(cfg.lam),
        "lambda_prime": list(last.lambda_prime) if last else None,
        "epsilon": cfg.epsilon,
        "claims": result.claims,
        "violations": [_violation_record(v) for v in result.violations],
    })


def _violation_record(v):
    if isinstance(v, dict):
        return v
    n, k, value = v
    return {"n": list(n), "k": list(k), "value": value}


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"


def trace_as_dicts(trace: list) -> list:
    return [asdict(r) for r in trace]
