"""Monte-Carlo excluded fraction against gamma and its log-log slope."""
import argparse
import csv
import sys

import numpy as np

from qpnls.lattice import ResonantSet
from qpnls.smalldiv import DiophantineSpec, excluded_measure_mc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--C", type=float, default=3.0)
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--gammas", default="0.005,0.01,0.02,0.04,0.08")
    args = ap.parse_args()
    gammas = [float(g) for g in args.gammas.split(",")]
    R = ResonantSet([(1,)])
    fr = [excluded_measure_mc(DiophantineSpec(g, args.C, args.N), R, args.samples, args.seed) for g in gammas]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["gamma", "fraction", "fraction_over_gamma"])
    for g, f in zip(gammas, fr):
        w.writerow([g, f, f / g])
    pos = [(g, f) for g, f in zip(gammas, fr) if f > 0]
    if len(pos) >= 2:
        x, y = np.log(np.array(pos)).T
        print(f"# log-log slope {np.polyfit(x, y, 1)[0]:.4f}")


if __name__ == "__main__":
    main()
