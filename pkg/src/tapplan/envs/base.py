from __future__ import annotations

from typing import Protocol, runtime_checkable

from tapplan.chain import EMPTY_CHAIN, ReasoningChain, TaskInput


@runtime_checkable
class Environment(Protocol):
    """Anything that scores a (task, chain) pair with a reward in [0, 1]."""

    deterministic: bool
    query_cost: float

    def evaluate(self, task: TaskInput, chain: ReasoningChain) -> float: ...

    def initial_chain(self, task: TaskInput) -> ReasoningChain: ...


def default_initial_chain(task: TaskInput) -> ReasoningChain:
    return task.initial_chain if task.initial_chain is not None else EMPTY_CHAIN


class CountingEnv:
    """Wraps an environment and counts ``evaluate`` calls."""

    def __init__(self, inner: Environment):
        self.inner = inner
        self.queries = 0
        self.deterministic = inner.deterministic
        self.query_cost = inner.query_cost

    def evaluate(self, task: TaskInput, chain: ReasoningChain) -> float:
        self.queries += 1
        return self.inner.evaluate(task, chain)

    def initial_chain(self, task: TaskInput) -> ReasoningChain:
        return self.inner.initial_chain(task)
