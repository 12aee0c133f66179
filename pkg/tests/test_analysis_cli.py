import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from coevo import analysis, cli
from coevo.backends.base import Backends, Query
from coevo.backends.mock import LandscapeAgent, LandscapeJudge, OracleMeta, ScriptedAgent, ScriptedJudge, ScriptedMeta
from coevo.backends.schema import GraphEditOp, MetaDecision
from coevo.config import ConfigError, LabConfig
from coevo.landscape import standard_landscape
from coevo.orchestrator import RunConfig, TraceWriter, run_instance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_trace(path, cfg, backends, qid="q"):
    with TraceWriter(path) as w:
        return run_instance(Query(qid, "t"), cfg, backends, writer=w)


def one_slow_update_traces(d, n=10):
    # scores cross the threshold at round 3 with K = 2, so exactly round 1 triggers
    for i in range(n):
        b = Backends(ScriptedAgent(), ScriptedJudge(answer_scores=[0, 0, 0, 1]), ScriptedMeta())
        write_trace(d / f"{i:02d}.jsonl", RunConfig(round_cap=4, slow_interval=2, success_threshold=0.5), b, f"q{i}")


def test_histogram_mass_at_one(tmp_path):
    one_slow_update_traces(tmp_path)
    rep = analysis.analyze(analysis.trace_files(tmp_path))
    assert rep.instances == 10
    assert rep.slow_update_bins == ["0", "1", "2", ">2"]
    assert rep.slow_update_fractions == [0.0, 1.0, 0.0, 0.0]
    assert rep.stop_reasons == {"threshold": 1.0}
    assert abs(sum(rep.slow_update_fractions) - 1) <= 1e-9


def test_growth_flat_nodes_rising_edges(tmp_path):
    adds = [("searcher", "verifier"), ("calculator", "verifier"), ("searcher", "calculator")]
    for i in range(4):
        meta = ScriptedMeta([MetaDecision(graph_edit=(GraphEditOp("edge_add", *e),)) for e in adds])
        b = Backends(ScriptedAgent(), ScriptedJudge(answer_scores=0.0), meta)
        write_trace(tmp_path / f"{i}.jsonl", RunConfig(round_cap=6, slow_interval=2), b, f"q{i}")
    rep = analysis.analyze(analysis.trace_files(tmp_path))
    nodes = [g["mean_nodes"] for g in rep.growth]
    edges = [g["mean_edges"] for g in rep.growth]
    assert nodes == [5.0] * 4
    assert edges == [7.0, 8.0, 9.0, 10.0]
    assert rep.stop_reasons == {"budget_exhausted": 1.0}


def test_noiseless_traces_have_nonnegative_increment(tmp_path):
    land = standard_landscape(0.0)
    for s in range(10):
        b = Backends(LandscapeAgent(land), LandscapeJudge(0.0, s), OracleMeta(land, 0.8, s))
        write_trace(tmp_path / f"{s}.jsonl", RunConfig(round_cap=10), b)
    rep = analysis.analyze(analysis.trace_files(tmp_path))
    assert rep.delta_m_mean >= 0 and rep.delta_m_count == 90
    assert [r["n"] for r in rep.m_series] == [10] * 10


def test_corrupt_lines_counted(tmp_path):
    one_slow_update_traces(tmp_path, n=2)
    p = tmp_path / "00.jsonl"
    good = p.read_text(encoding="utf-8")
    p.write_text(good + "{not json\n" + json.dumps({"type": "round"}) + "\n[1, 2]\n", encoding="utf-8")
    orphan = tmp_path / "zz.jsonl"
    orphan.write_text(good.splitlines()[1] + "\n", encoding="utf-8")
    rep = analysis.analyze(analysis.trace_files(tmp_path))
    assert rep.lines_skipped == 4
    assert rep.lines_consumed + rep.lines_skipped == rep.lines_total
    assert rep.lines_total == sum(len(f.read_text(encoding="utf-8").splitlines())
                                  for f in analysis.trace_files(tmp_path))


def test_truncated_run_is_incomplete(tmp_path):
    one_slow_update_traces(tmp_path, n=1)
    p = tmp_path / "00.jsonl"
    lines = p.read_text(encoding="utf-8").splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    rep = analysis.analyze([p])
    assert rep.stop_reasons == {"incomplete": 1.0}


def test_report_bytes_deterministic(tmp_path):
    traces = tmp_path / "traces"
    traces.mkdir()
    one_slow_update_traces(traces, n=3)
    outs = []
    for k, workers in enumerate((1, 4)):
        rep = analysis.analyze(reversed(analysis.trace_files(traces)), workers=workers)
        analysis.write_report(rep, tmp_path / f"out{k}")
        outs.append({f: (tmp_path / f"out{k}" / f).read_bytes()
                     for f in ("report.json", "slow_updates.csv", "growth.csv", "m_series.csv")})
    assert outs[0] == outs[1]
    rows = list(csv.reader((tmp_path / "out0" / "m_series.csv").open()))
    assert rows[0] == ["round", "n", "mean", "sem"]
    assert json.loads(outs[0]["report.json"])["format_version"] == 1


def test_analyze_needs_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        analysis.analyze([])


# -- CLI -----------------------------------------------------------------------------

def test_cli_run_mock_writes_trace(tmp_path, capsys):
    rc = cli.main(["run", "--config", str(CONFIGS / "run_landscape.json"), "--trace-dir", str(tmp_path)])
    assert rc == 0
    files = sorted(tmp_path.glob("*.jsonl"))
    assert [f.name for f in files] == ["0000_synthetic-0.jsonl"]
    lines = files[0].read_text(encoding="utf-8").splitlines()
    assert json.loads(lines[0])["type"] == "header" and len(lines) >= 2
    assert "stop_reason=" in capsys.readouterr().out


def test_cli_run_unreachable_threshold(tmp_path, capsys):
    rc = cli.main(["run", "--config", str(CONFIGS / "run_scripted.json"), "--trace-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stop_reason=budget_exhausted" in out and "rounds=10" in out and "slow_updates=5" in out


def test_cli_run_queries_file(tmp_path):
    q = tmp_path / "q.jsonl"
    q.write_text('{"id": "a/b", "text": "x"}\n\n{"id": "c", "text": "y"}\n', encoding="utf-8")
    rc = cli.main(["run", "--config", str(CONFIGS / "run_scripted.json"), "--queries", str(q),
                   "--trace-dir", str(tmp_path / "t")])
    assert rc == 0
    assert sorted(f.name for f in (tmp_path / "t").iterdir()) == ["0000_a_b.jsonl", "0001_c.jsonl"]


def test_cli_missing_config(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) != 0
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [{"p": 0.4}, {"landscape": "everest"}, {"seeds": 0}, {"colour": 1}])
def test_cli_lab_rejects_bad_config(tmp_path, capsys, bad):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps(bad), encoding="utf-8")
    assert cli.main(["lab", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert not (tmp_path / "o").exists()


def test_lab_config_precondition():
    with pytest.raises(ConfigError, match="p must lie"):
        LabConfig(p=0.4)
    assert LabConfig(p=1.0).p == 1.0


def test_cli_lab_noiseless_monotone(tmp_path):
    assert cli.main(["lab", "--config", str(CONFIGS / "lab_noiseless_p1.json"), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "lyapunov.csv").open()))
    assert list(rows[0]) == ["seed", "cycle", "lyapunov", "distance", "fitness_gap"]
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r["seed"], []).append(float(r["lyapunov"]))
    assert len(by_seed) == 10
    for L in by_seed.values():
        assert all(b <= a for a, b in zip(L, L[1:]))


def test_cli_lab_gamma_in_unit_interval(tmp_path):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps({"p": 0.75, "seeds": 40, "cycles": 30, "n_boot": 200}), encoding="utf-8")
    assert cli.main(["lab", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "report.json").read_text(encoding="utf-8"))["summary"]
    assert 0 < s["gamma_hat"] < 1
    assert s["gamma_theory"] == 0.5


def test_cli_analyze_round_trip(tmp_path, capsys):
    cli.main(["run", "--config", str(CONFIGS / "run_scripted.json"), "--trace-dir", str(tmp_path / "t")])
    capsys.readouterr()
    assert cli.main(["analyze", "--trace-dir", str(tmp_path / "t"), "--out", str(tmp_path / "a")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["slow_update_counts"][5] == 1
    assert cli.main(["analyze", "--trace-dir", str(tmp_path / "empty")]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "coevo.cli", "run", "--config", str(CONFIGS / "run_scripted.json"),
                        "--trace-dir", str(tmp_path)], capture_output=True, text=True, timeout=60)
    assert r.returncode == 0 and "demo" in r.stdout
