"""Two-frequency Newton run with a measurable contraction.

Writes the trace CSV and summary JSON and prints the residual history
together with the exponent log r_{k+1} / log r_k for every step k >= 1.
"""
import argparse
import math
import os

from qpnls.newton import NewtonConfig, Schedule, dumps_summary, run, summary_dict, write_trace_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--n-max", type=int, default=7)
    ap.add_argument("--out", default="out/two_frequency")
    args = ap.parse_args()
    cfg = NewtonConfig(modes=((1,), (-2,)), amplitudes=(0.1, 0.1), lam=(0.41421356, 0.7320508),
                       epsilon=args.epsilon, gamma=1e-4, diagnostics_max_dim=0,
                       schedule=Schedule(N0=3, growth=1.5, N_max=args.n_max, max_steps=8))
    res = run(cfg)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trace.csv"), "w", newline="") as fh:
        write_trace_csv(res.trace, fh, cfg.b)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        fh.write(dumps_summary(summary_dict(res, cfg)))
    print(f"verdict={res.verdict}")
    hist = [rec.residual_F for rec in res.trace]
    for k, (rec, r) in enumerate(zip(res.trace, hist)):
        ratio = ""
        if 1 <= k < len(hist) - 1 and 0 < hist[k + 1] < 1 and 0 < r < 1:
            ratio = f"  log r_{k + 1} / log r_{k} = {math.log(hist[k + 1]) / math.log(r):.3f}"
        print(f"step {k}: N={rec.N} residual={r:.3e}{ratio}")


if __name__ == "__main__":
    main()
