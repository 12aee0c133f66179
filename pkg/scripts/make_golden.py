"""Regenerate the meta-decision golden corpus under tests/golden/meta_decisions."""

import argparse
import json
from pathlib import Path

from coevo.backends.schema import (
    AgentFeedback,
    BirthDeathPair,
    GraphEditOp,
    MetaDecision,
    serialize,
)

DIFF = {"nodes_added": [], "nodes_removed": [], "edges_added": [], "edges_removed": []}


def valid_cases() -> dict[str, MetaDecision]:
    return {
        "empty_continue": MetaDecision(),
        "empty_stop": MetaDecision(time_control="stop", global_rationale="Scores plateaued."),
        "slow_again": MetaDecision(time_control="slow_again"),
        "replace_calculator": MetaDecision(
            birth_death_pairs=(BirthDeathPair("calculator", "researcher", "Find primary filings.",
                                              ("search_documents", "retrieve_document")),),
            graph_edit=(GraphEditOp("edge_add", "searcher", "verifier"),
                        GraphEditOp("edge_add", "researcher", "verifier")),
            graph_diff={"nodes_added": ["researcher"], "nodes_removed": ["calculator"],
                        "edges_added": [["searcher", "verifier"]], "edges_removed": []},
            global_rationale="Retrieval is the bottleneck. The calculator never scored.",
        ),
        "three_pairs": MetaDecision(
            birth_death_pairs=(BirthDeathPair("calculator", "researcher"),
                               BirthDeathPair(None, "searcher", "Second retrieval pass.", ("search",)),
                               BirthDeathPair("verifier", "verifier", "Stricter checks.", ())),
        ),
        "five_edges": MetaDecision(
            graph_edit=(GraphEditOp("edge_add", "searcher", "verifier"),
                        GraphEditOp("edge_add", "calculator", "verifier"),
                        GraphEditOp("edge_remove", "calculator", "reflector"),
                        GraphEditOp("edge_add", "searcher", "calculator"),
                        GraphEditOp("edge_remove", "planner", "calculator")),
        ),
        "feedback_only": MetaDecision(
            agent_feedback={"searcher": AgentFeedback("Quote exact figures.", "10-K filed 2025-02-14"),
                            "verifier": AgentFeedback("Cross-check units; report µs and €.", "")},
        ),
        "pure_birth": MetaDecision(birth_death_pairs=(BirthDeathPair(None, "researcher", "Read sources.", ()),)),
        "edge_removals": MetaDecision(
            graph_edit=(GraphEditOp("edge_remove", "planner", "calculator"),
                        GraphEditOp("edge_remove", "calculator", "reflector")),
            graph_diff={**DIFF, "edges_removed": [["planner", "calculator"], ["calculator", "reflector"]]},
        ),
        "sink_deletion_attempt": MetaDecision(birth_death_pairs=(BirthDeathPair("reflector", "reflector"),)),
        "cycle_attempt": MetaDecision(graph_edit=(GraphEditOp("edge_add", "verifier", "planner"),)),
    }


def _base() -> dict:
    return json.loads(serialize(MetaDecision()))


def invalid_cases() -> dict[str, str]:
    def doc(**changes):
        d = _base()
        for k, v in changes.items():
            if v is ...:
                del d[k]
            else:
                d[k] = v
        return json.dumps(d, indent=2) + "\n"

    pair = {"v_dead": "calculator", "v_new": {"role": "researcher", "goal": "", "tools": []}}
    return {
        "missing_time_control": doc(time_control=...),
        "bad_time_control": doc(time_control="pause"),
        "unknown_top_field": doc(confidence=0.9),
        "unknown_pair_field": doc(birth_death_pairs=[{**pair, "reason": "x"}]),
        "bad_edge_op": doc(graph_edit=[{"op": "edge_swap", "from": "a", "to": "b"}]),
        "missing_edge_endpoint": doc(graph_edit=[{"op": "edge_add", "from": "a"}]),
        "empty_endpoint": doc(graph_edit=[{"op": "edge_add", "from": "", "to": "b"}]),
        "missing_role": doc(birth_death_pairs=[{"v_dead": None, "v_new": {"goal": "", "tools": []}}]),
        "tools_not_list": doc(birth_death_pairs=[{"v_dead": None,
                                                  "v_new": {"role": "r", "goal": "", "tools": "search"}}]),
        "v_dead_number": doc(birth_death_pairs=[{**pair, "v_dead": 3}]),
        "graph_diff_missing_key": doc(graph_diff={"nodes_added": [], "nodes_removed": [], "edges_added": []}),
        "feedback_missing_seed": doc(agent_feedback={"searcher": {"prompt_delta": "x"}}),
        "long_rationale": doc(global_rationale="One. Two. Three. Four."),
        "pairs_not_list": doc(birth_death_pairs={"v_dead": None}),
        "top_level_array": "[]\n",
        "truncated_json": serialize(MetaDecision())[:40],
        "prose_reply": "I would add an edge from searcher to verifier.\n",
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/golden/meta_decisions"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    for sub, cases, render in (("valid", valid_cases(), serialize), ("invalid", invalid_cases(), str)):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for name, case in cases.items():
            (out / sub / f"{name}.json").write_text(render(case), encoding="utf-8")
    print(f"wrote {len(valid_cases())} valid and {len(invalid_cases())} invalid files to {out}")


if __name__ == "__main__":
    main()
