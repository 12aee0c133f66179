"""Declarative JSON configs for the ``run`` and ``lab`` commands."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping

from .backends.base import Backends, Query
from .landscape import LANDSCAPES, get_landscape
from .orchestrator import RunConfig


class ConfigError(ValueError):
    pass


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj


def read_queries(path) -> list[Query]:
    """JSONL, one ``{"id", "text", "rubric"?, "task_profile"?}`` object per line."""
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            try:
                out.append(Query.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ConfigError(f"{path}:{i}: bad query ({e})") from None
    return out


@dataclass
class RunSpec:
    run: RunConfig
    backend: dict
    queries: list[Query]


def load_run_spec(path) -> RunSpec:
    raw = read_json(path)
    unknown = set(raw) - {"run", "backend", "queries"}
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    try:
        run = RunConfig.from_dict(raw.get("run", {}))
        queries = [Query.from_dict(q) for q in raw.get("queries", [])]
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(str(e)) from None
    backend = dict(raw.get("backend", {"kind": "scripted"}))
    if backend.get("kind") not in ("landscape", "scripted", "http"):
        raise ConfigError("backend.kind must be landscape, scripted or http")
    return RunSpec(run, backend, queries)


def build_backends(spec: Mapping[str, Any], seed: int) -> Backends:
    from .backends import mock

    kind = spec["kind"]
    if kind == "landscape":
        try:
            land = get_landscape(spec.get("landscape", "standard"), spec.get("noise_bound"))
        except KeyError as e:
            raise ConfigError(str(e)) from None
        return Backends(
            mock.LandscapeAgent(land),
            mock.LandscapeJudge(land.noise_bound, seed=seed, anchored=bool(spec.get("anchored", False))),
            mock.OracleMeta(land, float(spec.get("p", 0.8)), seed=seed,
                            time_controls=tuple(spec.get("time_controls", ("continue",)))),
        )
    if kind == "scripted":
        return Backends(
            mock.ScriptedAgent(spec.get("outputs"), spec.get("answers"), spec.get("failing", ())),
            mock.ScriptedJudge(spec.get("contributions"), spec.get("answer_scores", 0.0),
                               spec.get("default_score", 0.5)),
            mock.ScriptedMeta(spec.get("meta_decisions", ())),
        )
    from .backends.http import ChatClient, HttpAgent, HttpJudge, HttpMeta, RateLimiter

    client = ChatClient.from_env(
        timeout=float(spec.get("timeout", 60.0)),
        temperature=spec.get("temperature", 0.0),
        developer_role=spec.get("developer_role", "system"),
        limiter=RateLimiter(float(spec.get("min_interval", 0.0))),
    )
    return Backends(HttpAgent(client), HttpJudge(client), HttpMeta(client))


@dataclass(frozen=True)
class LabConfig:
    landscape: str = "standard"
    p: float = 0.8
    eta: float = 0.5
    K: int = 2
    cycles: int = 40
    seeds: int = 100
    seed: int = 0
    noise_bound: float | None = None
    n_boot: int = 1000

    def __post_init__(self):
        if self.landscape not in LANDSCAPES:
            raise ConfigError(f"unknown landscape id {self.landscape!r}; known: {sorted(LANDSCAPES)}")
        if not 0.5 < self.p <= 1.0:
            raise ConfigError(f"p must lie in (0.5, 1], got {self.p}")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.K < 1 or self.cycles < 1 or self.seeds < 1 or self.n_boot < 1:
            raise ConfigError("K, cycles, seeds and n_boot must be positive")
        if self.noise_bound is not None and self.noise_bound < 0:
            raise ConfigError("noise_bound must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def load_lab_config(path) -> LabConfig:
    raw = read_json(path)
    unknown = set(raw) - set(LabConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown lab config fields: {sorted(unknown)}")
    try:
        return LabConfig(**raw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
