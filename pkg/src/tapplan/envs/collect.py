from __future__ import annotations

import logging
from typing import Callable, Iterator, Sequence

import numpy as np

from tapplan.chain import (
    DEFAULT_ENUM, EnumConfig, MDPState, NoOp, ScaleWeights, TaskInput, Transition, apply_edit, sample_action,
)
from tapplan.envs.base import Environment
from tapplan.errors import EnvError, TapError

log = logging.getLogger(__name__)


def iter_transitions(
    env: Environment,
    tasks: Sequence[TaskInput],
    policy: str = "random",
    episodes: int = 1,
    steps_per_episode: int = 8,
    seed: int = 0,
    vocab: Sequence[str] = (),
    weights: ScaleWeights = ScaleWeights(),
    enum_cfg: EnumConfig = DEFAULT_ENUM,
    model=None,
    planner_cfg=None,
) -> Iterator[Transition]:
    """Yield transitions episode by episode; episode ``e`` uses task ``e % len(tasks)``.

    ``policy`` is "random" (uniform two-level edit sampling) or "planner"
    (one planning step of the learned ``model`` per edit).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if not tasks:
        raise ValueError("no tasks to collect from")
    if policy not in ("random", "planner"):
        raise ValueError(f"unknown collection policy {policy!r}")
    if policy == "planner" and model is None:
        raise ValueError("planner-guided collection needs a model")
    rng = np.random.default_rng(seed)
    for e in range(episodes):
        task = tasks[e % len(tasks)]
        chain = env.initial_chain(task)
        try:
            prev = env.evaluate(task, chain)
        except EnvError as exc:
            log.warning("episode %d: initial evaluation failed, skipping episode: %s", e, exc)
            continue
        for t in range(steps_per_episode):
            if policy == "random":
                action = sample_action(chain, vocab, weights, rng, enum_cfg)
            else:
                action = _planner_action(env, model, task, chain, planner_cfg, vocab, enum_cfg, rng)
            try:
                nxt = apply_edit(chain, action)
                r = env.evaluate(task, nxt)
            except TapError as exc:
                log.warning("episode %d step %d: skipped transition: %s", e, t, exc)
                continue
            yield Transition(
                MDPState(task, chain), action, nxt, r, r - prev,
                {"episode": e, "step": t, "seed": seed, "policy": policy},
            )
            chain, prev = nxt, r


def _planner_action(env, model, task, chain, cfg, vocab, enum_cfg, rng):
    from tapplan.planner import PlannerConfig, optimize

    cfg = cfg or PlannerConfig()
    sub = PlannerConfig(**{**cfg.__dict__, "outer_steps": 1, "probe_env": False, "seed": int(rng.integers(2**31))})
    _, traj = optimize(env, model, task, chain, sub, vocab, enum_cfg)
    return traj.steps[0].action if traj.steps else NoOp()


def collect_transitions(
    env: Environment,
    tasks: Sequence[TaskInput],
    policy: str = "random",
    episodes: int = 1,
    steps_per_episode: int = 8,
    seed: int = 0,
    sink: Callable[[Transition], None] | None = None,
    **kwargs,
) -> list[Transition]:
    out = []
    for t in iter_transitions(env, tasks, policy, episodes, steps_per_episode, seed, **kwargs):
        out.append(t)
        if sink is not None:
            sink(t)
    return out
