"""Deterministic stand-in reward: similarity of a chain to a hidden target.

Also generates families of synthetic tasks whose start chains are corrupted
copies of their targets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from tapplan.chain import ReasoningChain, StepReorder, TaskInput, apply_edit
from tapplan.envs.base import default_initial_chain
from tapplan.envs.similarity import SIMILARITIES


class SyntheticOracleEnv:
    query_cost = 0.0

    def __init__(
        self,
        targets: Mapping[str, ReasoningChain],
        similarity: str = "token_f1",
        noise: float = 0.0,
        seed: int = 0,
    ):
        if similarity not in SIMILARITIES:
            raise ValueError(f"unknown similarity {similarity!r}; choose from {sorted(SIMILARITIES)}")
        if noise < 0:
            raise ValueError("noise must be >= 0")
        self.targets = dict(targets)
        self.similarity = similarity
        self.noise = noise
        self.deterministic = noise == 0
        self._sim = SIMILARITIES[similarity]
        self._rng = np.random.default_rng(seed)

    def evaluate(self, task: TaskInput, chain: ReasoningChain) -> float:
        try:
            target = self.targets[task.id]
        except KeyError:
            raise KeyError(f"no hidden target for task {task.id!r}") from None
        r = self._sim(chain.tokens(), target.tokens())
        if self.noise:
            r += self.noise * self._rng.standard_normal()
        return float(min(1.0, max(0.0, r)))

    def initial_chain(self, task: TaskInput) -> ReasoningChain:
        return default_initial_chain(task)


@dataclass(frozen=True)
class SyntheticTask:
    task: TaskInput
    target: ReasoningChain

    @property
    def start(self) -> ReasoningChain:
        return self.task.initial_chain


@dataclass(frozen=True)
class TaskFamily:
    """Knobs for ``make_tasks``. Content tokens build targets; distractor
    tokens only ever appear as corruption."""

    n_content: int = 40
    n_distractors: int = 10
    n_steps: int = 3
    step_len: tuple[int, int] = (3, 4)
    n_inserted: tuple[int, int] = (3, 5)
    n_dropped: tuple[int, int] = (0, 1)
    n_replaced: tuple[int, int] = (0, 0)
    reorder: bool = False

    @property
    def content_vocab(self) -> list[str]:
        return [f"w{i:02d}" for i in range(self.n_content)]

    @property
    def distractor_vocab(self) -> list[str]:
        return [f"n{i:02d}" for i in range(self.n_distractors)]

    @property
    def vocab(self) -> list[str]:
        return self.content_vocab + self.distractor_vocab


def _corrupt(target: ReasoningChain, fam: TaskFamily, rng: np.random.Generator) -> ReasoningChain:
    steps = [list(s) for s in target.steps]
    if fam.reorder and len(steps) > 1:
        src = int(rng.integers(len(steps)))
        dst = int(rng.choice([j for j in range(len(steps)) if j != src]))
        steps = [list(s) for s in apply_edit(ReasoningChain.of(steps), StepReorder(src, dst)).steps]
    for _ in range(int(rng.integers(fam.n_replaced[0], fam.n_replaced[1] + 1))):
        s = int(rng.integers(len(steps)))
        p = int(rng.integers(len(steps[s])))
        choices = [t for t in fam.vocab if t != steps[s][p]]
        steps[s][p] = choices[int(rng.integers(len(choices)))]
    for _ in range(int(rng.integers(fam.n_dropped[0], fam.n_dropped[1] + 1))):
        s = int(rng.integers(len(steps)))
        if len(steps[s]) > 1:
            del steps[s][int(rng.integers(len(steps[s])))]
    for _ in range(int(rng.integers(fam.n_inserted[0], fam.n_inserted[1] + 1))):
        s = int(rng.integers(len(steps)))
        steps[s].insert(int(rng.integers(len(steps[s]) + 1)), fam.distractor_vocab[int(rng.integers(fam.n_distractors))])
    return ReasoningChain.of(steps)


def make_tasks(n: int, seed: int, family: TaskFamily = TaskFamily(), prefix: str = "task") -> list[SyntheticTask]:
    """Random targets over the content vocabulary plus corrupted start chains.

    The task text names the target's tokens in sorted order.
    """
    rng = np.random.default_rng(seed)
    content = family.content_vocab
    out = []
    for i in range(n):
        steps = []
        for _ in range(family.n_steps):
            k = int(rng.integers(family.step_len[0], family.step_len[1] + 1))
            steps.append([content[j] for j in rng.choice(len(content), size=k, replace=False)])
        target = ReasoningChain.of(steps)
        start = _corrupt(target, family, rng)
        text = " ".join(["solve"] + sorted(target.tokens()))
        out.append(SyntheticTask(TaskInput(f"{prefix}-{seed}-{i}", text, initial_chain=start), target))
    return out


def oracle_for(tasks: list[SyntheticTask], similarity: str = "token_f1", noise: float = 0.0, seed: int = 0) -> SyntheticOracleEnv:
    return SyntheticOracleEnv({t.task.id: t.target for t in tasks}, similarity, noise, seed)


REORDER_FAMILY = TaskFamily(
    n_content=12, n_distractors=0, n_steps=3, step_len=(4, 4),
    n_inserted=(0, 0), n_dropped=(0, 0), n_replaced=(0, 2), reorder=True,
)
