"""Fitted contraction rate against gamma = 2p - 1, and residual floor against noise."""

import argparse

import numpy as np

from coevo.lab import bootstrap_gamma, run_contraction_experiment
from coevo.landscape import get_landscape


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--landscape", default="wide")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--cycles", type=int, default=60)
    args = ap.parse_args(argv)

    print("gamma  p     gamma_hat  ci_lo   ci_hi   ratio")
    for gamma in (0.2, 0.5, 0.8):
        p = (1 + gamma) / 2
        land = get_landscape(args.landscape, 0.05)
        reps = [run_contraction_experiment(land, p, 0.5, 2, args.cycles, s) for s in range(args.seeds)]
        g, lo, hi = bootstrap_gamma(reps, n_boot=300)
        print(f"{gamma:.1f}    {p:.2f}  {g:.3f}      {lo:.3f}   {hi:.3f}   {g / gamma:.2f}")

    print("\neps    floor")
    for eps in (0.0, 0.05, 0.1):
        land = get_landscape("standard", eps)
        reps = [run_contraction_experiment(land, 0.8, 0.5, 2, args.cycles, s) for s in range(args.seeds)]
        print(f"{eps:.2f}   {np.mean([r.floor for r in reps]):.5f}")


if __name__ == "__main__":
    main()
