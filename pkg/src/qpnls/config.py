"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Lists are comma separated; resonant modes are separated by ``;`` with the
d components of each mode separated by commas (``modes = 1,0; 0,-2``).
Unknown keys, duplicate keys and malformed values are rejected with the
offending line and field path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, fields, replace

from .errors import ConfigurationError
from .lattice import MAX_DIM
from .newton import NewtonConfig, Schedule
from .nonlinearity import PowerSeries


class ConfigError(ConfigurationError):
    """A configuration problem, tagged with the field path it concerns."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _modes(text: str) -> tuple:
    return tuple(tuple(int(v) for v in m.split(",")) for m in text.split(";") if m.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# key -> (parser, description); the order here is the documented order
KEYS = {
    "d": (int, "spatial dimension, 1..3"),
    "b": (int, "number of frequencies (resonant modes), 1..3"),
    "modes": (_modes, "resonant spatial modes n_j, ';'-separated, components ','-separated"),
    "amplitudes": (_floats, "pinned amplitudes a_j > 0"),
    "lambda": (_floats, "frequency parameter in [0,1]^b (run)"),
    "epsilon": (float, "coupling strength, >= 0"),
    "alpha": (float, "Gevrey index, > 1"),
    "L0": (float, "initial Gevrey width, > 0"),
    "f": (_floats, "power series coefficients c_0, c_1, ... of f(s)"),
    "N0": (int, "initial truncation radius"),
    "growth": (float, "radius growth factor A > 1"),
    "N_max": (int, "largest truncation radius"),
    "max_steps": (int, "Newton step limit"),
    "residual_tol": (float, "convergence threshold for the residual F-norm"),
    "B_max": (float, "condition estimate above which a solve is rejected"),
    "gamma": (float, "Diophantine constant"),
    "dc_exponent": (_opt_float, "Diophantine exponent C (default b+d+1)"),
    "dc_filter": (_bool, "run the Diophantine pre-filter before solving"),
    "budget": (float, "bound on ||q||_l1^2 for the series composition"),
    "diagnostics_max_dim": (int, "largest operator for which the inverse is formed for diagnostics"),
    "record_timing": (_bool, "write wall times into the trace (breaks byte-identical output)"),
    "sweep_samples": (int, "number of lambda samples for sweep and filter"),
    "sweep_low": (_floats, "lower corner of the sampled lambda box"),
    "sweep_high": (_floats, "upper corner of the sampled lambda box"),
    "seed": (_opt_int, "seed for randomized commands"),
    "workers": (int, "worker processes for sweep"),
    "claim_K_prime": (float, "constant K' in the decay claim sum <= K' eps"),
    "removal_M": (int, "lower |k| cut for interval removal"),
    "removal_N": (int, "upper |k| cut for interval removal"),
    "removal_tau": (_opt_float, "exponent tau for interval removal (default b+2)"),
    "out": (str, "output directory"),
}


@dataclass(frozen=True)
class RunConfig:
    d: int = 1
    b: int = 1
    modes: tuple = ((1,),)
    amplitudes: tuple = (0.1,)
    lam: tuple | None = None
    epsilon: float = 1e-3
    alpha: float = 2.0
    L0: float = 1.0
    f: tuple = (0.0, 0.0, 0.5)
    N0: int = 4
    growth: float = 2.0
    N_max: int = 16
    max_steps: int = 8
    residual_tol: float = 1e-12
    B_max: float = 1e8
    gamma: float = 0.01
    dc_exponent: float | None = None
    dc_filter: bool = True
    budget: float = 0.1
    diagnostics_max_dim: int = 2500
    record_timing: bool = False
    sweep_samples: int = 0
    sweep_low: tuple | None = None
    sweep_high: tuple | None = None
    seed: int | None = None
    workers: int = 1
    claim_K_prime: float = 10.0
    removal_M: int = 2
    removal_N: int = 8
    removal_tau: float | None = None
    out: str = "out"
    explicit: frozenset = dc_field(default=frozenset(), compare=False)

    def validate(self) -> "RunConfig":
        """Check every field against the solver preconditions; raise ConfigError."""
        for name, lo, hi in (("d", 1, MAX_DIM), ("b", 1, MAX_DIM)):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(name, f"must lie in [{lo}, {hi}], got {v}")
        if len(self.modes) != self.b:
            raise ConfigError("modes", f"expected b={self.b} modes, got {len(self.modes)}")
        for j, m in enumerate(self.modes):
            if len(m) != self.d:
                raise ConfigError(f"modes[{j}]", f"expected d={self.d} components, got {len(m)}")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigError("modes", "resonant modes must be pairwise distinct")
        if len(self.amplitudes) != self.b:
            raise ConfigError("amplitudes", f"expected {self.b} values, got {len(self.amplitudes)}")
        for j, a in enumerate(self.amplitudes):
            if not a > 0:
                raise ConfigError(f"amplitudes[{j}]", f"must be positive, got {a}")
        if self.lam is not None:
            if len(self.lam) != self.b:
                raise ConfigError("lambda", f"expected {self.b} values, got {len(self.lam)}")
            for j, v in enumerate(self.lam):
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"lambda[{j}]", f"must lie in [0, 1], got {v}")
        for name in ("sweep_low", "sweep_high"):
            v = getattr(self, name)
            if v is not None:
                if len(v) != self.b:
                    raise ConfigError(name, f"expected {self.b} values, got {len(v)}")
                for j, x in enumerate(v):
                    if not 0.0 <= x <= 1.0:
                        raise ConfigError(f"{name}[{j}]", f"must lie in [0, 1], got {x}")
        lo, hi = self.sweep_box
        for j, (a, c) in enumerate(zip(lo, hi)):
            if not a <= c:
                raise ConfigError(f"sweep_low[{j}]", "must not exceed sweep_high")
        checks = [
            ("epsilon", self.epsilon >= 0 and math.isfinite(self.epsilon), "must be finite and >= 0"),
            ("alpha", self.alpha > 1, "must exceed 1"),
            ("L0", self.L0 > 0, "must be positive"),
            ("growth", self.growth > 1, "must exceed 1"),
            ("N0", self.N0 >= 1, "must be >= 1"),
            ("N_max", self.N_max >= self.N0, "must be >= N0"),
            ("max_steps", self.max_steps >= 0, "must be >= 0"),
            ("residual_tol", self.residual_tol > 0, "must be positive"),
            ("B_max", self.B_max > 0, "must be positive"),
            ("gamma", self.gamma >= 0, "must be >= 0"),
            ("budget", self.budget > 0, "must be positive"),
            ("sweep_samples", self.sweep_samples >= 0, "must be >= 0"),
            ("workers", self.workers >= 1, "must be >= 1"),
            ("removal_M", self.removal_M >= 0, "must be >= 0"),
            ("removal_N", self.removal_N > self.removal_M, "must exceed removal_M"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, f"{msg}, got {getattr(self, name)}")
        if self.dc_exponent is not None and not self.dc_exponent > self.b + self.d:
            raise ConfigError("dc_exponent", f"must exceed b+d={self.b + self.d}, got {self.dc_exponent}")
        if self.removal_tau is not None and not self.removal_tau > self.b:
            raise ConfigError("removal_tau", f"must exceed b={self.b}, got {self.removal_tau}")
        reach = max(max(abs(v) for v in m) for m in self.modes)
        if self.N0 <= max(reach, 1):
            raise ConfigError("N0", f"must exceed the sup-norm of the resonant modes ({max(reach, 1)})")
        try:
            PowerSeries(self.f)
        except ConfigurationError as exc:
            raise ConfigError("f", str(exc)) from None
        return self

    @property
    def sweep_box(self) -> tuple:
        lo = self.sweep_low if self.sweep_low is not None else (0.0,) * self.b
        hi = self.sweep_high if self.sweep_high is not None else (1.0,) * self.b
        return tuple(lo), tuple(hi)

    @property
    def tau(self) -> float:
        return float(self.b + 2) if self.removal_tau is None else self.removal_tau

    def schedule(self) -> Schedule:
        return Schedule(N0=self.N0, growth=self.growth, max_steps=self.max_steps,
                        residual_tol=self.residual_tol, B_max=self.B_max, N_max=self.N_max)

    def newton_config(self, lam=None) -> NewtonConfig:
        lam = self.lam if lam is None else tuple(float(v) for v in lam)
        if lam is None:
            raise ConfigError("lambda", "required for this command")
        try:
            return NewtonConfig(
                modes=self.modes, amplitudes=self.amplitudes, lam=lam, epsilon=self.epsilon,
                f=PowerSeries(self.f), alpha=self.alpha, L0=self.L0, schedule=self.schedule(),
                gamma=self.gamma, dc_exponent=self.dc_exponent, dc_filter=self.dc_filter,
                budget=self.budget, diagnostics_max_dim=self.diagnostics_max_dim,
                record_timing=self.record_timing,
            )
        except ConfigError:
            raise
        except ConfigurationError as exc:
            raise ConfigError("config", str(exc)) from None


_FIELD_OF_KEY = {"lambda": "lam"}


def parse_config(text: str, source: str = "config") -> RunConfig:
    """Parse and validate a configuration text.

    Raises
    ------
    ConfigError
        Unknown or duplicate key, unparsable value, or a failed validation;
        the message starts with ``source:line:key`` or the field path.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}:{key}", f"unknown key (known: {', '.join(KEYS)})")
        if key in values:
            raise ConfigError(f"{source}:{lineno}:{key}", "duplicate key")
        parser, _ = KEYS[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}:{key}", f"cannot parse {val!r} ({exc})") from None
    kwargs = {_FIELD_OF_KEY.get(k, k): v for k, v in values.items()}
    b = kwargs.get("b", len(kwargs["modes"]) if "modes" in kwargs else 1)
    d = kwargs.get("d", len(kwargs["modes"][0]) if kwargs.get("modes") else 1)
    kwargs.setdefault("b", b)
    kwargs.setdefault("d", d)
    if "modes" not in kwargs:
        raise ConfigError(f"{source}:modes", "required key missing")
    if "amplitudes" not in kwargs:
        raise ConfigError(f"{source}:amplitudes", "required key missing")
    return RunConfig(**kwargs, explicit=frozenset(values)).validate()


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate() if kw else cfg


def documented_keys() -> list:
    """(key, description) pairs in documented order."""
    return [(k, desc) for k, (_, desc) in KEYS.items()]


def config_field_names() -> list:
    return [f.name for f in fields(RunConfig) if f.name != "explicit"]
