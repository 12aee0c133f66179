"""Deterministic backends for tests and synthetic experiments.

Scripted mocks replay fixed tables. Landscape mocks close the loop through
a fitness landscape: the agent tags its output with its current fitness and
the judge reads the tag back, adding seeded noise. Oracle and adversarial
meta-controllers stand in for the language model on the slow loop.
"""

from __future__ import annotations

import re
import zlib
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from ..graph import AgentNode
from ..lab import OracleExhausted, biased_mutation_oracle
from ..landscape import FitnessLandscape
from ..replicator import to_frequencies
from .base import (
    ContributionContext,
    JudgeVerdict,
    MetaSnapshot,
    Query,
    RoundContext,
    TransportError,
    clamp01,
    snap_to_anchor,
)
from .schema import (
    TIME_CONTROLS,
    BirthDeathPair,
    GraphEditOp,
    MetaDecision,
    SchemaError,
    decision_from_delta,
    fallback_decision,
    parse_decision,
    parse_decision_text,
)

FITNESS_TAG = re.compile(r"\bfitness=([0-9eE.+-]+)")
TEAM_TAG = re.compile(r"\bteam_fitness=([0-9eE.+-]+)")

ScoreTable = Union[float, Sequence[float], Callable[[int], float]]


def _at(table: ScoreTable, t: int) -> float:
    if callable(table):
        return table(t)
    if isinstance(table, (int, float)):
        return float(table)
    return float(table[min(t, len(table) - 1)])


def _stream(seed: int, *keys) -> np.random.Generator:
    """Generator keyed by call coordinates, so draws do not depend on call order."""
    words = [seed & 0xFFFFFFFF] + [zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(words)


# -- scripted ----------------------------------------------------------------

class ScriptedAgent:
    """Replays ``outputs[agent_id]`` (list by round or {round: text}).

    The sink appends ``Final Answer: <answers[t]>`` when ``answers`` is given.
    Agents listed in ``failing`` raise a transport error every round.
    """

    def __init__(self, outputs: Mapping[str, Union[Sequence[str], Mapping[int, str]]] | None = None,
                 answers: Sequence[str] | None = None, failing: Sequence[str] = ()):
        self.outputs = dict(outputs or {})
        self.answers = list(answers) if answers else None
        self.failing = set(failing)

    def execute(self, node: AgentNode, incoming: Sequence[str], query: Query, ctx: RoundContext) -> str:
        if node.id in self.failing:
            raise TransportError(f"scripted failure for {node.id}")
        t = ctx.round_idx
        table = self.outputs.get(node.id)
        if isinstance(table, Mapping):
            text = table.get(t, f"{node.role} step {t}")
        elif table:
            text = table[min(t, len(table) - 1)]
        else:
            text = f"{node.role} step {t}"
        if node.id == ctx.graph.sink and self.answers is not None:
            text += f"\nFinal Answer: {self.answers[min(t, len(self.answers) - 1)]}"
        return text

    def reflect(self, node: AgentNode, round_idx: int, reward: float, output: str) -> str:
        return f"round {round_idx} reward {reward:.3f}"


class ScriptedJudge:
    """Contribution scores per agent id (``default`` otherwise) and answer scores per round."""

    def __init__(self, contributions: Mapping[str, ScoreTable] | None = None,
                 answer_scores: ScoreTable = 0.0, default: ScoreTable = 0.5):
        self.contributions = dict(contributions or {})
        self.answer_scores = answer_scores
        self.default = default

    def judge_contribution(self, output: str, ctx: ContributionContext) -> JudgeVerdict:
        raw = _at(self.contributions.get(ctx.agent_id, self.default), ctx.round_idx)
        return JudgeVerdict.clamped(raw, "scripted")

    def judge_answer(self, answer: str, query: Query, ctx: RoundContext) -> float:
        return clamp01(_at(self.answer_scores, ctx.round_idx))


class RandomJudge:
    """Seeded uniform scores, deliberately including out-of-range values."""

    def __init__(self, seed: int, spread: float = 0.2):
        self.seed = seed
        self.spread = spread

    def _raw(self, *keys) -> float:
        return float(_stream(self.seed, *keys).uniform(-self.spread, 1 + self.spread))

    def judge_contribution(self, output: str, ctx: ContributionContext) -> JudgeVerdict:
        return JudgeVerdict.clamped(self._raw("c", ctx.round_idx, ctx.agent_id), "random")

    def judge_answer(self, answer: str, query: Query, ctx: RoundContext) -> float:
        return clamp01(self._raw("s", ctx.round_idx))


class ScriptedMeta:
    """Replays decisions; raw strings and dicts go through the schema parser."""

    def __init__(self, decisions: Sequence[Union[MetaDecision, str, dict]] = ()):
        self.decisions = list(decisions)
        self.calls = 0

    def decide(self, snapshot: MetaSnapshot) -> MetaDecision:
        i = self.calls
        self.calls += 1
        if i >= len(self.decisions):
            return MetaDecision()
        item = self.decisions[i]
        try:
            if isinstance(item, str):
                return parse_decision_text(item)
            if isinstance(item, dict):
                return parse_decision(item)
        except SchemaError as e:
            return fallback_decision(str(e))
        return item


# -- landscape-driven ----------------------------------------------------------

def _current_frequencies(graph):
    return to_frequencies(graph.weights())


class LandscapeAgent:
    """Tags each output with the agent's fitness at the current frequencies."""

    def __init__(self, landscape: FitnessLandscape):
        self.landscape = landscape

    def execute(self, node: AgentNode, incoming: Sequence[str], query: Query, ctx: RoundContext) -> str:
        pi = _current_frequencies(ctx.graph)
        f = self.landscape.fitness(pi, ctx.graph)
        text = f"[{node.id} round={ctx.round_idx} fitness={f[node.id]!r}]"
        if node.id == ctx.graph.sink:
            team = self.landscape.mean_fitness(pi, ctx.graph)
            text += f"\nFinal Answer: team_fitness={team!r}"
        return text

    def reflect(self, node: AgentNode, round_idx: int, reward: float, output: str) -> str:
        return f"round {round_idx}: reward {reward:.3f}"


class LandscapeJudge:
    """Reads the fitness tag back and adds uniform noise within ``noise_bound``.

    With ``anchored`` the noisy score snaps to the rubric anchors. The answer
    score is the team mean fitness carried by the sink's answer.
    """

    def __init__(self, noise_bound: float = 0.0, seed: int = 0, anchored: bool = False):
        if noise_bound < 0:
            raise ValueError("noise_bound must be nonnegative")
        self.noise_bound = noise_bound
        self.seed = seed
        self.anchored = anchored

    def judge_contribution(self, output: str, ctx: ContributionContext) -> JudgeVerdict:
        m = FITNESS_TAG.search(output)
        if m is None:
            return JudgeVerdict(0.0, "no fitness tag")
        score = float(m.group(1))
        if self.noise_bound:
            score += _stream(self.seed, ctx.query.id, ctx.round_idx, ctx.agent_id).uniform(
                -self.noise_bound, self.noise_bound)
        score = clamp01(score)
        if self.anchored:
            score = snap_to_anchor(score)
        return JudgeVerdict(score, "landscape fitness")

    def judge_answer(self, answer: str, query: Query, ctx: RoundContext) -> float:
        m = TEAM_TAG.search(answer)
        return clamp01(float(m.group(1))) if m else 0.0


class OracleMeta:
    """Meta-controller backed by the biased mutation oracle.

    ``time_controls`` scripts the time_control field per call (the last entry
    repeats); the default is always ``continue``.
    """

    def __init__(self, landscape: FitnessLandscape, p: float, seed: int = 0,
                 time_controls: Sequence[str] = ("continue",)):
        if any(tc not in TIME_CONTROLS for tc in time_controls) or not time_controls:
            raise ValueError(f"time_controls must be drawn from {TIME_CONTROLS}")
        self.landscape = landscape
        self.p = p
        self.rng = np.random.default_rng(seed)
        self.time_controls = list(time_controls)
        self.calls = 0

    def decide(self, snapshot: MetaSnapshot) -> MetaDecision:
        tc = self.time_controls[min(self.calls, len(self.time_controls) - 1)]
        self.calls += 1
        try:
            delta = biased_mutation_oracle(snapshot.graph, self.landscape, self.p, self.rng)
        except OracleExhausted as e:
            return MetaDecision(time_control=tc, global_rationale=str(e))
        return decision_from_delta(delta, time_control=tc)


class AdversarialMeta:
    """Random, frequently illegal decisions for budget and schedule fuzzing.

    Draws oversized pair and edit lists, sink deletions, unknown ids and
    roles, cycles and duplicates, plus occasional unusable replies.
    """

    def __init__(self, seed: int, role_pool: Sequence[str], max_pairs: int = 5, max_edits: int = 9):
        self.rng = np.random.default_rng(seed)
        self.roles = list(role_pool) + ["alien"]
        self.max_pairs = max_pairs
        self.max_edits = max_edits

    def decide(self, snapshot: MetaSnapshot) -> MetaDecision:
        rng = self.rng
        if rng.random() < 0.05:
            return fallback_decision("adversarial: unusable reply")
        g = snapshot.graph
        ids = sorted(g.nodes)
        pool_ids = ids + [g.sink] * 2 + ["ghost"] + [r for r in self.roles if r not in g.nodes]
        pairs = []
        for _ in range(int(rng.integers(self.max_pairs + 1))):
            dead = None if rng.random() < 0.3 else pool_ids[int(rng.integers(len(pool_ids)))]
            pairs.append(BirthDeathPair(dead, self.roles[int(rng.integers(len(self.roles)))]))
        edits = []
        for _ in range(int(rng.integers(self.max_edits + 1))):
            u = pool_ids[int(rng.integers(len(pool_ids)))]
            v = pool_ids[int(rng.integers(len(pool_ids)))]
            op = "edge_add" if rng.random() < 0.6 else "edge_remove"
            edits.append(GraphEditOp(op, u, v))
        tc = TIME_CONTROLS[int(rng.choice(3, p=[0.8, 0.1, 0.1]))]
        return MetaDecision(tuple(pairs), tuple(edits), time_control=tc)
