"""Command line entry point: ``qpnls {run,sweep,filter,verify,report}``.

Exit codes
----------
0   run converged / command succeeded
1   verify found a violated invariant
2   run rejected (small divisor)
3   run stopped at the step limit or diverged
64  usage error (bad arguments, unknown suite, missing seed)
65  invalid configuration
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import newton
from .config import ConfigError, RunConfig, documented_keys, load_config, with_overrides
from .errors import ConfigurationError, RealityViolation
from .field import nls_multiplier
from .lattice import ResonantSet
from .smalldiv import DiophantineSpec, dc_check, remove_intervals, verify_kept, worst_divisor

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_REJECTED = 2
EXIT_MAX_STEPS = 3
EXIT_USAGE = 64
EXIT_CONFIG = 65

VERDICT_EXIT = {"converged": EXIT_OK, "rejected": EXIT_REJECTED, "max_steps": EXIT_MAX_STEPS}

SWEEP_COLUMNS = ["sample", "lambda", "verdict", "drift", "final_residual", "decay_sum", "decay_ok", "dc_pass"]
FILTER_COLUMNS = ["sample", "lambda", "pass", "worst_divisor", "worst_n", "worst_k"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _expand(columns: list, b: int) -> list:
    out = []
    for c in columns:
        out += [f"lambda_{j + 1}" for j in range(b)] if c == "lambda" else [c]
    return out


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(newton.dumps_summary(newton._jsonable(obj)))


def _seed(cfg: RunConfig, command: str) -> int:
    if cfg.seed is None:
        raise UsageError(f"{command} needs a seed (config key 'seed' or --seed)")
    return int(cfg.seed)


def _samples(cfg: RunConfig, seed: int) -> np.ndarray:
    lo, hi = (np.asarray(v, dtype=float) for v in cfg.sweep_box)
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((cfg.sweep_samples, cfg.b))


# run ------------------------------------------------------------------------------


def cmd_run(cfg: RunConfig) -> int:
    ncfg = cfg.newton_config()
    result = newton.run(ncfg)
    out = _ensure_dir(cfg.out)
    with open(os.path.join(out, "trace.csv"), "w", encoding="utf-8", newline="") as fh:
        newton.write_trace_csv(result.trace, fh, cfg.b)
    summary = newton.summary_dict(result, ncfg)
    _write_json(os.path.join(out, "summary.json"), summary)
    last = summary["final_residual"]
    print(f"verdict={result.verdict} steps={summary['steps']} final_residual={last!r}")
    if result.violations:
        print(f"violations={len(result.violations)} first={summary['violations'][0]}")
    return VERDICT_EXIT[result.verdict]


# sweep ----------------------------------------------------------------------------


def _sweep_one(args):
    cfg, lam = args
    row = {"lambda": [float(v) for v in lam], "verdict": "error", "drift": math.nan,
           "final_residual": math.nan, "decay_sum": math.nan, "decay_ok": False, "dc_pass": False}
    try:
        ncfg = cfg.newton_config(lam)
        ok, _ = dc_check(ncfg.lam, DiophantineSpec(ncfg.gamma, ncfg.C, ncfg.schedule.N_max), ncfg.multiplier,
                         ncfg.resonant)
        row["dc_pass"] = bool(ok)
        res = newton.run(ncfg)
    except (ConfigurationError, RealityViolation) as exc:
        row["message"] = str(exc)
        return row
    row["verdict"] = res.verdict
    if res.trace:
        row["final_residual"] = float(res.trace[-1].residual_F)
    if res.claims:
        row["drift"] = float(res.claims["drift"])
        row["decay_sum"] = float(res.claims["decay_sum"])
        row["decay_ok"] = bool(res.claims["decay_sum"] <= cfg.claim_K_prime * cfg.epsilon)
    return row


def sweep_rows(cfg: RunConfig, seed: int) -> list:
    """Independent runs at seeded samples, in sample order."""
    jobs = [(cfg, lam) for lam in _samples(cfg, seed)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_sweep_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    return [_sweep_one(j) for j in jobs]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep_csv(rows: list, stream, b: int) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(_expand(SWEEP_COLUMNS, b))
    for i, r in enumerate(rows):
        w.writerow([i] + [_fmt(v) for v in r["lambda"]]
                   + [_fmt(r[c]) for c in SWEEP_COLUMNS[2:]])


def sweep_summary(rows: list, cfg: RunConfig, seed: int) -> dict:
    counts = {v: sum(r["verdict"] == v for r in rows) for v in ("converged", "rejected", "max_steps", "error")}
    n = len(rows)
    return {
        "samples": n,
        "seed": seed,
        "epsilon": cfg.epsilon,
        "gamma": cfg.gamma,
        "counts": counts,
        "success_fraction": counts["converged"] / n if n else None,
        "decay_claim_failures": sum(r["verdict"] == "converged" and not r["decay_ok"] for r in rows),
    }


def cmd_sweep(cfg: RunConfig) -> int:
    seed = _seed(cfg, "sweep")
    rows = sweep_rows(cfg, seed)
    out = _ensure_dir(cfg.out)
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        write_sweep_csv(rows, fh, cfg.b)
    summary = sweep_summary(rows, cfg, seed)
    _write_json(os.path.join(out, "sweep_summary.json"), summary)
    print(f"samples={summary['samples']} success_fraction={summary['success_fraction']}")
    return EXIT_OK


# filter ---------------------------------------------------------------------------


def cmd_filter(cfg: RunConfig) -> int:
    seed = _seed(cfg, "filter")
    R = ResonantSet(cfg.modes)
    C = float(cfg.b + cfg.d + 1) if cfg.dc_exponent is None else cfg.dc_exponent
    spec = DiophantineSpec(cfg.gamma, C, cfg.N_max)
    spec.validate_for(cfg.d, cfg.b)
    out = _ensure_dir(cfg.out)
    passed = 0
    with open(os.path.join(out, "filter.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_expand(FILTER_COLUMNS, cfg.b))
        for i, lam in enumerate(_samples(cfg, seed)):
            mu = nls_multiplier(lam, R)
            ok, _ = dc_check(lam, spec, mu, R)
            value, n, k = worst_divisor(lam, spec, mu, R)
            passed += ok
            w.writerow([i] + [repr(float(v)) for v in lam]
                       + ["1" if ok else "0", repr(value), " ".join(map(str, n or ())), " ".join(map(str, k or ()))])
    summary = {
        "samples": cfg.sweep_samples,
        "seed": seed,
        "gamma": cfg.gamma,
        "C": C,
        "N": cfg.N_max,
        "pass_fraction": passed / cfg.sweep_samples if cfg.sweep_samples else None,
    }
    if cfg.b <= 2:
        lo, hi = cfg.sweep_box
        rem = remove_intervals(list(zip(lo, hi)), cfg.removal_M, cfg.removal_N, cfg.gamma, cfg.tau)
        summary["intervals"] = {
            "M": cfg.removal_M,
            "N": cfg.removal_N,
            "tau": cfg.tau,
            "cell_size": rem.cell_size,
            "grid_exponent": rem.grid_exponent,
            "removed_measure": rem.removed_measure,
            "total_measure": rem.total_measure,
            "bound_shape": rem.bound_shape,
            "K": rem.K,
            "fine_grid_violations": verify_kept(rem, cfg.removal_M, cfg.removal_N, cfg.gamma, cfg.tau),
            "kept": [[list(iv) for iv in box] for box in rem.kept],
        }
    _write_json(os.path.join(out, "kept_intervals.json"), summary)
    print(f"samples={cfg.sweep_samples} pass_fraction={summary['pass_fraction']}")
    return EXIT_OK


# verify ---------------------------------------------------------------------------


def cmd_verify(suite: str, seed: int, trials: int | None, out: str | None) -> int:
    from .verify import SUITES

    names = list(SUITES) if suite == "all" else [suite]
    if any(n not in SUITES for n in names):
        raise UsageError(f"unknown suite {suite!r}; known: {', '.join(SUITES)}, all")
    failed = 0
    report = {}
    for name in names:
        kw = {} if trials is None else {"trials": trials}
        res = SUITES[name](seed, **kw)
        report[name] = {"trials": res.trials, "violations": res.violations, "details": res.details}
        print(f"{name}: {'PASS' if res.passed else 'FAIL'} ({res.trials} trials, {res.violations} violations)")
        failed += not res.passed
    if out:
        _write_json(os.path.join(_ensure_dir(out), f"verify_{suite}.json"), report)
    return EXIT_OK if failed == 0 else EXIT_VERIFY_FAILED


# report ---------------------------------------------------------------------------


REPORT_FILES = ("summary.json", "sweep_summary.json", "kept_intervals.json")


def cmd_report(out: str) -> int:
    if not os.path.isdir(out):
        raise UsageError(f"output directory {out!r} does not exist")
    found = 0
    for name in REPORT_FILES + tuple(sorted(f for f in os.listdir(out) if f.startswith("verify_"))):
        path = os.path.join(out, name)
        if not os.path.exists(path):
            continue
        found += 1
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        print(f"== {name}")
        for key in sorted(data):
            val = data[key]
            if key == "kept" or (isinstance(val, (list, dict)) and len(json.dumps(val)) > 200):
                val = f"<{type(val).__name__} of {len(val)} entries>"
            print(f"{key}: {json.dumps(val, sort_keys=True) if not isinstance(val, str) else val}")
    if not found:
        raise UsageError(f"no reports found in {out!r}")
    return EXIT_OK


# entry ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:20s} {desc}" for k, desc in documented_keys())
    p = _Parser(
        prog="qpnls",
        description="Newton iteration for quasi-periodic NLS solutions and verification suites.",
        epilog="config keys:\n" + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, metavar="PATH", help="key = value config file")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides config key 'out')")
        sp.add_argument("--seed", type=int, metavar="U64", help="seed (overrides config key 'seed')")
        sp.add_argument("--workers", type=int, metavar="N", help="worker processes (overrides 'workers')")

    common(sub.add_parser("run", help="solve at one lambda; exit 0/2/3 by verdict"))
    common(sub.add_parser("sweep", help="independent runs over seeded lambda samples"))
    common(sub.add_parser("filter", help="Diophantine filter over samples plus interval removal"))
    v = sub.add_parser("verify", help="run a named property suite")
    v.add_argument("suite", help="suite name or 'all'")
    v.add_argument("--trials", type=int, help="trial count (suite default otherwise)")
    common(v, config_required=False)
    r = sub.add_parser("report", help="print the reports stored in an output directory")
    common(r, config_required=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, 0 if args.seed is None else args.seed, args.trials, args.out)
        if args.command == "report":
            return cmd_report(args.out or "out")
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, out=args.out, seed=args.seed, workers=args.workers)
        return {"run": cmd_run, "sweep": cmd_sweep, "filter": cmd_filter}[args.command](cfg)
    except UsageError as exc:
        print(f"qpnls: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"qpnls: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"qpnls: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"qpnls: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
