import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevo.backends.base import Backends, Query
from coevo.backends.mock import ScriptedAgent, ScriptedJudge, ScriptedMeta
from coevo.backends.schema import (
    TIME_CONTROLS,
    AgentFeedback,
    BirthDeathPair,
    GraphEditOp,
    MetaDecision,
    SchemaError,
    parse_decision,
    parse_decision_text,
    sentence_count,
    serialize,
)
from coevo.graph import CENTRALIZED_TEMPLATE, EditBudget, init_graph, validate_delta
from coevo.orchestrator import RunConfig, run_instance, slow_update

GOLDEN = Path(__file__).parent / "golden" / "meta_decisions"
VALID = sorted((GOLDEN / "valid").glob("*.json"))
INVALID = sorted((GOLDEN / "invalid").glob("*.json"))


def canonical(text):
    return json.dumps(json.loads(text), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def test_corpus_size():
    assert len(VALID) + len(INVALID) >= 20
    assert (GOLDEN / "valid" / "three_pairs.json") in VALID


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.stem)
def test_valid_round_trip_is_byte_exact(path):
    raw = path.read_bytes()
    text = raw.decode("utf-8")
    out = serialize(parse_decision_text(text))
    assert out.encode("utf-8") == raw
    assert out == canonical(text)
    assert serialize(parse_decision_text(out)) == out


@pytest.mark.parametrize("path", INVALID, ids=lambda p: p.stem)
def test_invalid_routes_to_fallback(path):
    text = path.read_text(encoding="utf-8")
    with pytest.raises(SchemaError):
        parse_decision_text(text)
    d = ScriptedMeta([text]).decide(None)
    assert d.parse_error is not None
    assert d.time_control == "continue" and not d.birth_death_pairs and not d.graph_edit


@pytest.mark.parametrize("path", INVALID, ids=lambda p: p.stem)
def test_invalid_leaves_graph_unchanged(path):
    g = init_graph(CENTRALIZED_TEMPLATE, "reflector")
    new, rec = slow_update(g, [], ScriptedMeta([path.read_text(encoding="utf-8")]), EditBudget())
    assert new is g
    assert rec.violations == ["schema_violation"] and rec.rejected


def _golden(name):
    return parse_decision_text((GOLDEN / "valid" / f"{name}.json").read_text(encoding="utf-8"))


def test_three_pairs_parse_then_truncate():
    d = _golden("three_pairs")
    assert len(d.birth_death_pairs) == 3
    g = init_graph(CENTRALIZED_TEMPLATE, "reflector")
    rep = validate_delta(g, d.to_delta(), EditBudget())
    assert len(rep.delta.birth_death_pairs) == 2


def test_five_edges_keep_first_four():
    d = _golden("five_edges")
    g = init_graph(CENTRALIZED_TEMPLATE, "reflector")
    rep = validate_delta(g, d.to_delta(), EditBudget())
    assert rep.delta.edge_edits == d.to_delta().edge_edits[:4]


def test_unicode_is_kept_literal():
    text = (GOLDEN / "valid" / "feedback_only.json").read_text(encoding="utf-8")
    assert "µs and €" in text


def test_missing_time_control_rejected():
    obj = json.loads(serialize(MetaDecision()))
    del obj["time_control"]
    with pytest.raises(SchemaError, match="time_control"):
        parse_decision(obj)


def test_code_fence_tolerated():
    body = serialize(MetaDecision(time_control="stop"))
    assert parse_decision_text(f"```json\n{body}```").time_control == "stop"


@pytest.mark.parametrize("text,n", [("", 0), ("One.", 1), ("One. Two! Three?", 3), ("v1.2 is out. Ok", 2)])
def test_sentence_count(text, n):
    assert sentence_count(text) == n


def test_edge_op_mapping():
    d = MetaDecision(graph_edit=(GraphEditOp("edge_add", "a", "b"), GraphEditOp("edge_remove", "b", "c")))
    assert [e.op for e in d.to_delta().edge_edits] == ["add", "remove"]


ident = st.text("abcdefghij_", min_size=1, max_size=8)
words = st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters=".!?"), max_size=30)
decisions = st.builds(
    MetaDecision,
    birth_death_pairs=st.lists(st.builds(BirthDeathPair, st.one_of(st.none(), ident), ident, words,
                                         st.lists(ident, max_size=3).map(tuple)), max_size=4).map(tuple),
    graph_edit=st.lists(st.builds(GraphEditOp, st.sampled_from(["edge_add", "edge_remove"]), ident, ident),
                        max_size=6).map(tuple),
    agent_feedback=st.dictionaries(ident, st.builds(AgentFeedback, words, words), max_size=3),
    global_rationale=words,
    time_control=st.sampled_from(TIME_CONTROLS),
)


@settings(max_examples=200)
@given(decisions)
def test_serialize_parse_round_trip(d):
    s = serialize(d)
    back = parse_decision_text(s)
    assert back == d
    assert serialize(back) == s


def test_scripted_meta_empty_after_script():
    m = ScriptedMeta([MetaDecision(time_control="stop")])
    assert m.decide(None).time_control == "stop"
    assert m.decide(None) == MetaDecision()


def test_fallback_decision_in_run_continues():
    cfg = RunConfig(round_cap=4, slow_interval=2)
    b = Backends(ScriptedAgent(), ScriptedJudge(answer_scores=0.0), ScriptedMeta(["not json"] * 2))
    res = run_instance(Query("q", "x"), cfg, b)
    assert res.stop_reason == "budget_exhausted" and res.slow_updates == 2
    assert all(tr.slow_update.rejected for tr in res.traces if tr.slow_update)
    assert res.final_graph.generation == 0
