"""Aggregate run traces (JSONL) into diagnostic statistics.

The output depends only on the bytes of the input files: files are processed
in sorted-name order and every float is written with ``repr`` precision.

CSV layouts (fixed column order):

``slow_updates.csv``  bin, count, fraction  (last row is the overflow bin)
``growth.csv``        step, instances, mean_nodes, mean_edges
``m_series.csv``      round, n, mean, sem
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
INCOMPLETE = "incomplete"
_ROUND_FIELDS = ("round", "answer_score", "weighted_mean", "team_mean", "contributions")


@dataclass
class InstanceSummary:
    file: str
    query_id: str
    round_cap: int
    slow_interval: int
    initial_nodes: int
    initial_edges: int
    m: list[float] = field(default_factory=list)
    growth: list[tuple[int, int]] = field(default_factory=list)
    stop_reason: str = INCOMPLETE

    @property
    def slow_updates(self) -> int:
        return len(self.growth)


@dataclass
class FileScan:
    instances: list[InstanceSummary]
    total: int
    skipped: int


@dataclass
class AnalysisReport:
    format_version: int
    files: int
    instances: int
    lines_total: int
    lines_consumed: int
    lines_skipped: int
    slow_update_bins: list[str]
    slow_update_counts: list[int]
    slow_update_fractions: list[float]
    stop_reasons: dict[str, float]
    growth: list[dict]
    delta_m_mean: float | None
    delta_m_frac_positive: float | None
    delta_m_count: int
    m_series: list[dict]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _valid_round(obj) -> bool:
    return all(k in obj for k in _ROUND_FIELDS) and isinstance(obj["round"], int)


def scan_file(path) -> FileScan:
    """Split a file into instances; malformed or orphaned lines are skipped."""
    path = Path(path)
    instances: list[InstanceSummary] = []
    cur: InstanceSummary | None = None
    total = skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            total += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("not an object")
                kind = obj.get("type")
                if kind == "header":
                    cfg, g = obj["config"], obj["graph"]
                    cur = InstanceSummary(
                        file=path.name, query_id=str(obj["query"]["id"]),
                        round_cap=int(cfg["round_cap"]), slow_interval=int(cfg["slow_interval"]),
                        initial_nodes=len(g["nodes"]), initial_edges=len(g["edges"]),
                    )
                    instances.append(cur)
                elif kind == "round" and cur is not None and _valid_round(obj):
                    cur.m.append(float(obj["weighted_mean"]))
                    su = obj.get("slow_update")
                    if su is not None:
                        cur.growth.append((int(su["nodes"]), int(su["edges"])))
                    if obj.get("stop_reason"):
                        cur.stop_reason = obj["stop_reason"]
                else:
                    raise ValueError(f"unexpected line of type {kind!r}")
            except (ValueError, KeyError, TypeError) as e:
                skipped += 1
                log.warning("%s:%d skipped (%s)", path.name, lineno, e)
    return FileScan(instances, total, skipped)


def _sem(xs: Sequence[float]) -> float:
    return float(np.std(xs, ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else 0.0


def summarize(scans: Sequence[FileScan]) -> AnalysisReport:
    insts = [i for s in scans for i in s.instances]
    n = len(insts)

    top = max((i.round_cap // i.slow_interval for i in insts), default=0)
    counts = [0] * (top + 2)
    for i in insts:
        counts[min(i.slow_updates, top + 1)] += 1
    bins = [str(b) for b in range(top + 1)] + [f">{top}"]
    fracs = [c / n if n else 0.0 for c in counts]

    reasons: dict[str, int] = {}
    for i in insts:
        reasons[i.stop_reason] = reasons.get(i.stop_reason, 0) + 1
    stop = {k: reasons[k] / n for k in sorted(reasons)}

    growth = []
    depth = max((i.slow_updates for i in insts), default=0)
    for step in range(depth + 1):
        pts = [(i.initial_nodes, i.initial_edges) if step == 0 else i.growth[step - 1]
               for i in insts if i.slow_updates >= step]
        growth.append({"step": step, "instances": len(pts),
                       "mean_nodes": float(np.mean([p[0] for p in pts])),
                       "mean_edges": float(np.mean([p[1] for p in pts]))})

    deltas = [b - a for i in insts for a, b in zip(i.m, i.m[1:])]
    series = []
    for r in range(max((len(i.m) for i in insts), default=0)):
        xs = [i.m[r] for i in insts if len(i.m) > r]
        series.append({"round": r, "n": len(xs), "mean": float(np.mean(xs)), "sem": _sem(xs)})

    total = sum(s.total for s in scans)
    skipped = sum(s.skipped for s in scans)
    return AnalysisReport(
        format_version=REPORT_FORMAT_VERSION, files=len(scans), instances=n,
        lines_total=total, lines_consumed=total - skipped, lines_skipped=skipped,
        slow_update_bins=bins, slow_update_counts=counts, slow_update_fractions=fracs,
        stop_reasons=stop, growth=growth,
        delta_m_mean=float(np.mean(deltas)) if deltas else None,
        delta_m_frac_positive=float(np.mean(np.array(deltas) > 0)) if deltas else None,
        delta_m_count=len(deltas), m_series=series,
    )


def trace_files(trace_dir) -> list[Path]:
    return sorted(Path(trace_dir).glob("*.jsonl"), key=lambda p: p.name)


def analyze(paths: Iterable, workers: int = 4) -> AnalysisReport:
    paths = sorted((Path(p) for p in paths), key=lambda p: p.name)
    if not paths:
        raise FileNotFoundError("no trace files to analyze")
    with ThreadPoolExecutor(max(1, workers)) as pool:
        scans = list(pool.map(scan_file, paths))
    return summarize(scans)


def write_report(report: AnalysisReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    _csv(out / "slow_updates.csv", ["bin", "count", "fraction"],
         zip(report.slow_update_bins, report.slow_update_counts, report.slow_update_fractions))
    _csv(out / "growth.csv", ["step", "instances", "mean_nodes", "mean_edges"],
         ([g["step"], g["instances"], g["mean_nodes"], g["mean_edges"]] for g in report.growth))
    _csv(out / "m_series.csv", ["round", "n", "mean", "sem"],
         ([r["round"], r["n"], r["mean"], r["sem"]] for r in report.m_series))


def _csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
