"""Reward from an OpenAI-compatible chat-completions endpoint.

The rendered chain is sent as guidance alongside the task text; the reward is
the fraction of ``m`` completions that the scorer judges correct.
"""
from __future__ import annotations

import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import httpx

from tapplan.chain import ReasoningChain, TaskInput, render_chain
from tapplan.envs.base import default_initial_chain
from tapplan.errors import ConfigError, EnvError, ParseError

log = logging.getLogger(__name__)

API_KEY_ENV = "TAP_API_KEY"
SYSTEM_PROMPT = "Solve the task. Follow the reasoning guidance step by step and end with 'Answer: <answer>'."


@dataclass(frozen=True)
class LlmEnvConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    completions: int = 3
    scorer: str = "contains_answer"
    timeout: float = 30.0
    max_retries: int = 2
    max_in_flight: int = 4
    backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.completions < 1:
            raise ConfigError("completions must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; choose from {sorted(SCORERS)}")


def _normalize(text: str) -> str:
    return " ".join(text.lower().split()).strip(" .,;:!?\"'")


_ANSWER = re.compile(r"answer\s*[:=]\s*(.+)", re.IGNORECASE)


def extract_answer(completion: str) -> str:
    """Text after the last 'Answer:' marker, else the last non-empty line."""
    hits = _ANSWER.findall(completion)
    if hits:
        return hits[-1].strip()
    lines = [l for l in completion.strip().splitlines() if l.strip()]
    return lines[-1] if lines else ""


def exact_match(completion: str, expected: str) -> bool:
    return _normalize(extract_answer(completion)) == _normalize(expected)


def contains_answer(completion: str, expected: str) -> bool:
    return _normalize(expected) in _normalize(completion)


SCORERS = {"exact_match": exact_match, "contains_answer": contains_answer}


def build_messages(task: TaskInput, chain: ReasoningChain) -> list[dict]:
    guidance = render_chain(chain)
    user = task.text if not guidance else f"{task.text}\n\nReasoning guidance:\n{guidance}"
    return [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": user}]


def _retryable(exc: Exception) -> bool:
    if isinstance(exc, httpx.HTTPStatusError):
        return exc.response.status_code == 429 or exc.response.status_code >= 500
    return isinstance(exc, httpx.TransportError)


class LlmEnv:
    deterministic = False

    def __init__(self, config: LlmEnvConfig, client: httpx.Client | None = None, api_key: str | None = None):
        self.config = config
        self.query_cost = float(config.completions)
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client()
        self._headers = headers
        self._score = SCORERS[config.scorer]

    def close(self) -> None:
        self._client.close()

    def _post(self, body: dict) -> dict:
        """POST with retries; total time is bounded by timeout * (retries + 1)."""
        cfg = self.config
        deadline = time.monotonic() + cfg.timeout * (cfg.max_retries + 1)
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                resp = self._client.post(
                    cfg.endpoint, json=body, headers=self._headers, timeout=min(cfg.timeout, remaining)
                )
                resp.raise_for_status()
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ParseError(f"response is not JSON: {exc}") from exc
            except (httpx.HTTPStatusError, httpx.TransportError) as exc:
                last = exc
                if not _retryable(exc):
                    break
                log.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
                pause = min(cfg.backoff * 2**attempt, max(0.0, deadline - time.monotonic()))
                if attempt < cfg.max_retries and pause > 0:
                    time.sleep(pause)
        raise EnvError(f"chat completion failed after {cfg.max_retries + 1} attempt(s): {last}")

    def completions(self, task: TaskInput, chain: ReasoningChain) -> list[str]:
        cfg = self.config
        messages = build_messages(task, chain)
        out: list[str] = []
        while len(out) < cfg.completions:
            data = self._post(
                {"model": cfg.model, "messages": messages, "temperature": cfg.temperature, "n": cfg.completions - len(out)}
            )
            try:
                contents = [c["message"]["content"] for c in data["choices"]]
            except (KeyError, TypeError) as exc:
                raise ParseError(f"malformed chat completion response: missing {exc}") from exc
            if not contents or not all(isinstance(c, str) for c in contents):
                raise ParseError("chat completion response has no usable choices")
            out.extend(contents)
        return out[: cfg.completions]

    def evaluate(self, task: TaskInput, chain: ReasoningChain) -> float:
        if task.expected_answer is None:
            raise EnvError(f"task {task.id!r} has no expected_answer to score against")
        texts = self.completions(task, chain)
        return sum(self._score(t, task.expected_answer) for t in texts) / len(texts)

    def evaluate_many(self, pairs: Sequence[tuple[TaskInput, ReasoningChain]]) -> list[float]:
        """Evaluate several (task, chain) pairs with bounded concurrency; results keep input order."""
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            return list(pool.map(lambda tc: self.evaluate(*tc), pairs))

    def initial_chain(self, task: TaskInput) -> ReasoningChain:
        return default_initial_chain(task)
