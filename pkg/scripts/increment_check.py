"""Round-to-round change of the team mean contribution over seeded mock runs."""

import argparse

import numpy as np

from coevo.backends.base import Backends, Query
from coevo.backends.mock import LandscapeAgent, LandscapeJudge, OracleMeta
from coevo.landscape import get_landscape
from coevo.orchestrator import RunConfig, increment_check, run_instance


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--p", type=float, default=0.8)
    ap.add_argument("--eps", type=float, default=0.0)
    args = ap.parse_args(argv)
    land = get_landscape("standard", args.eps)
    cfg = RunConfig(round_cap=10, slow_interval=2, success_threshold=1.0, eta=0.5)
    series, deltas = [], []
    for seed in range(args.runs):
        b = Backends(LandscapeAgent(land), LandscapeJudge(args.eps, seed), OracleMeta(land, args.p, seed))
        res = run_instance(Query(f"q{seed}", "synthetic"), cfg, b)
        chk = increment_check(res.traces)
        series.append(chk.m)
        deltas.extend(chk.deltas)
    m = np.array(series)
    print(f"mean delta m = {np.mean(deltas):.5f}, positive fraction = {np.mean(np.array(deltas) > 0):.3f}")
    for t, (mu, se) in enumerate(zip(m.mean(0), m.std(0, ddof=1) / np.sqrt(len(m)))):
        print(f"round {t}: m = {mu:.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()
