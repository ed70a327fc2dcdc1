"""Sweep success fraction at two coupling strengths over the same lambda samples."""
import argparse

from qpnls.cli import sweep_rows, sweep_summary
from qpnls.config import parse_config

BASE = """
modes = 1
amplitudes = 0.1
N0 = 4
N_max = 8
max_steps = 6
gamma = {gamma}
epsilon = {eps}
sweep_samples = {samples}
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--gamma", type=float, default=0.01)
    args = ap.parse_args()
    for eps in (1e-3, 1e-4):
        cfg = parse_config(BASE.format(gamma=args.gamma, eps=eps, samples=args.samples))
        s = sweep_summary(sweep_rows(cfg, args.seed), cfg, args.seed)
        print(f"epsilon={eps:g} success_fraction={s['success_fraction']:.3f} counts={s['counts']}")


if __name__ == "__main__":
    main()
