"""Command-line entry point: ``coevo run | lab | analyze``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, LabConfig, build_backends, load_lab_config, load_run_spec, read_queries
from .graph import GraphError
from .lab import bootstrap_gamma, predicted_cycles, run_contraction_experiment
from .landscape import get_landscape
from .orchestrator import TraceWriter, run_instance

log = logging.getLogger("coevo")

LAB_FORMAT_VERSION = 1


def _safe_name(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in s) or "query"


def cmd_run(args) -> int:
    spec = load_run_spec(args.config)
    run = spec.run if args.seed is None else replace(spec.run, seed=args.seed)
    queries = read_queries(args.queries) if args.queries else spec.queries
    if not queries:
        raise ConfigError("no queries: give them in the config or with --queries")
    trace_dir = Path(args.trace_dir or "traces")
    trace_dir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for i, q in enumerate(queries):
        path = trace_dir / f"{i:04d}_{_safe_name(q.id)}.jsonl"
        try:
            backends = build_backends(spec.backend, seed=run.seed + i)
            with TraceWriter(path) as w:
                res = run_instance(q, run, backends, writer=w)
        except (GraphError, ValueError, RuntimeError) as e:
            failed += 1
            log.error("query %s failed: %s", q.id, e)
            continue
        print(f"{q.id}\tstop_reason={res.stop_reason}\tscore={res.final_score:.4f}\t"
              f"rounds={res.rounds_used}\tslow_updates={res.slow_updates}")
    return 1 if failed else 0


def run_lab(cfg: LabConfig):
    land = get_landscape(cfg.landscape, cfg.noise_bound)
    reports = [run_contraction_experiment(land, cfg.p, cfg.eta, cfg.K, cfg.cycles, cfg.seed + i)
               for i in range(cfg.seeds)]
    point, lo, hi = bootstrap_gamma(reports, n_boot=cfg.n_boot, seed=cfg.seed)
    L0 = float(np.mean([r.lyapunov[0] for r in reports]))
    pred = predicted_cycles(L0, 2 * cfg.p - 1, cfg.eta, land.noise_bound)
    hits = [r.cycles_to_threshold for r in reports]
    reached = [h for h in hits if h is not None]
    summary = {
        "gamma_hat": point, "gamma_ci": [lo, hi], "gamma_theory": 2 * cfg.p - 1,
        "L0": L0, "threshold": cfg.eta * land.noise_bound, "predicted_cycles": pred,
        "fraction_reached": len(reached) / len(hits),
        "mean_cycles_to_threshold": float(np.mean(reached)) if len(reached) == len(hits) else None,
        "divergent_runs": sum(r.divergent for r in reports),
    }
    for k, v in list(summary.items()):
        if isinstance(v, float) and not math.isfinite(v):
            summary[k] = None
    return summary, reports


def cmd_lab(args) -> int:
    cfg = load_lab_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    summary, reports = run_lab(cfg)
    out = Path(args.out or "lab_out")
    out.mkdir(parents=True, exist_ok=True)
    doc = {"format_version": LAB_FORMAT_VERSION, "config": cfg.to_dict(), "summary": summary,
           "runs": [r.to_dict() for r in reports]}
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    with open(out / "lyapunov.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "cycle", "lyapunov", "distance", "fitness_gap"])
        for r in reports:
            for c, (L, d, g) in enumerate(zip(r.lyapunov, r.distances, r.gaps)):
                w.writerow([r.seed, c, repr(L), d, repr(g)])
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    if not args.trace_dir:
        raise ConfigError("analyze needs --trace-dir")
    files = analysis.trace_files(args.trace_dir)
    if not files:
        raise ConfigError(f"no .jsonl files in {args.trace_dir}")
    report = analysis.analyze(files)
    analysis.write_report(report, args.out or "analysis_out")
    print(report.to_json(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coevo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run instances and write JSONL traces")
    p.add_argument("--config", required=True)
    p.add_argument("--queries", help="JSONL query file (overrides queries in the config)")
    p.add_argument("--trace-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("lab", help="contraction experiment over a seed grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_lab)

    p = sub.add_parser("analyze", help="aggregate trace files")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
