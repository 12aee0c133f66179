"""Backends that talk to an OpenAI-compatible chat-completions endpoint.

Configuration comes from the environment: ``COEVO_LLM_URL`` (full endpoint
URL), ``COEVO_LLM_MODEL`` and optionally ``COEVO_LLM_API_KEY``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Sequence

from ..graph import AgentNode
from . import prompts
from .base import (
    BackendError,
    BackendTimeout,
    ContributionContext,
    JudgeVerdict,
    MetaSnapshot,
    Query,
    RoundContext,
    RubricError,
    TransportError,
    parse_json_object,
    rubric_score,
)
from .schema import MetaDecision, SchemaError, fallback_decision, parse_decision_text

log = logging.getLogger(__name__)

ENV_URL = "COEVO_LLM_URL"
ENV_MODEL = "COEVO_LLM_MODEL"
ENV_KEY = "COEVO_LLM_API_KEY"
PARSE_RETRIES = 2


class RateLimiter:
    """Minimum spacing between request starts, shared across threads."""

    def __init__(self, min_interval: float = 0.0):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.min_interval
        if start > now:
            time.sleep(start - now)


@dataclass
class ChatClient:
    url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    temperature: float | None = 0.0
    developer_role: str = "system"  # role name used for the developer part
    extra: dict = field(default_factory=dict)
    limiter: RateLimiter = field(default_factory=RateLimiter)

    @classmethod
    def from_env(cls, **kw) -> ChatClient:
        url, model = os.environ.get(ENV_URL), os.environ.get(ENV_MODEL)
        if not url or not model:
            raise BackendError(f"set {ENV_URL} and {ENV_MODEL} to use the HTTP backend")
        return cls(url=url, model=model, api_key=os.environ.get(ENV_KEY), **kw)

    def _body(self, messages: Sequence[dict]) -> bytes:
        msgs = [
            {"role": self.developer_role if m["role"] == "developer" else m["role"], "content": m["content"]}
            for m in messages
        ]
        body = {"model": self.model, "messages": msgs, **self.extra}
        if self.temperature is not None:
            body["temperature"] = self.temperature
        return json.dumps(body, ensure_ascii=False).encode("utf-8")

    def complete(self, messages: Sequence[dict]) -> str:
        headers = {"Content-Type": "application/json; charset=utf-8"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=self._body(messages), headers=headers, method="POST")
        self.limiter.wait()
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (socket.timeout, TimeoutError) as e:
            raise BackendTimeout(f"no reply within {self.timeout}s") from e
        except urllib.error.URLError as e:
            if isinstance(e.reason, (socket.timeout, TimeoutError)):
                raise BackendTimeout(f"no reply within {self.timeout}s") from e
            raise TransportError(str(e)) from e
        except (OSError, ValueError) as e:
            raise TransportError(str(e)) from e
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise TransportError(f"unexpected response shape: {str(payload)[:200]}") from e


class HttpAgent:
    def __init__(self, client: ChatClient):
        self.client = client

    def execute(self, node: AgentNode, incoming: Sequence[str], query: Query, ctx: RoundContext) -> str:
        return self.client.complete(prompts.agent_messages(node, incoming, query))

    def reflect(self, node: AgentNode, round_idx: int, reward: float, output: str) -> str:
        return self.client.complete(prompts.reflection_messages(round_idx, reward, output)).strip()


class HttpJudge:
    """Contribution and rubric judge with two retries on unusable replies."""

    def __init__(self, client: ChatClient, retries: int = PARSE_RETRIES):
        self.client = client
        self.retries = retries

    def judge_contribution(self, output: str, ctx: ContributionContext) -> JudgeVerdict:
        msgs = prompts.contribution_messages(output, ctx)
        for _ in range(self.retries + 1):
            reply = self.client.complete(msgs)
            verdict = parse_verdict(reply)
            if verdict is not None:
                return verdict
        return JudgeVerdict(0.0, "judge_parse_failure")

    def judge_answer(self, answer: str, query: Query, ctx: RoundContext) -> float:
        if not query.rubric:
            raise RubricError("rubric is empty")
        msgs = prompts.rubric_messages(answer, query.rubric)
        err: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                results = parse_json_object(self.client.complete(msgs))["results"]
                return rubric_score(query.rubric, results)
            except (ValueError, KeyError, TypeError) as e:
                err = e
        raise RubricError(f"rubric judge reply unusable after {self.retries + 1} attempts: {err}")


def parse_verdict(reply: str) -> JudgeVerdict | None:
    """``{"score": x, "reason": "..."}`` with the score clamped; None if unusable."""
    try:
        obj = parse_json_object(reply)
        score = obj["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
            return None
        reason = obj.get("reason", "")
        return JudgeVerdict.clamped(float(score), reason if isinstance(reason, str) else str(reason))
    except (ValueError, KeyError):
        return None


class HttpMeta:
    def __init__(self, client: ChatClient, retries: int = PARSE_RETRIES):
        self.client = client
        self.retries = retries

    def decide(self, snapshot: MetaSnapshot) -> MetaDecision:
        msgs = prompts.meta_messages(snapshot)
        err = ""
        for attempt in range(self.retries + 1):
            try:
                return parse_decision_text(self.client.complete(msgs))
            except SchemaError as e:
                err = str(e)
                log.warning("meta reply rejected (attempt %d): %s", attempt + 1, err)
        return fallback_decision(err)

