"""Latent-rollout planning over chain edits.

Each outer step samples K candidate edits, rolls every candidate H steps
through the learned transition model, scores the terminal latent with the
reward head, picks one candidate and applies it to the real chain.

Any object with ``encode``, ``predict_transition`` and ``predict_reward``
works as the model; ``OracleModel`` plugs the true environment in instead.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from tapplan.chain import (
    DEFAULT_ENUM, EditAction, EnumConfig, MDPState, NoOp, ReasoningChain, ScaleWeights, TaskInput,
    action_to_dict, apply_edit, enumerate_actions, sample_action, sample_candidates,
)
from tapplan.envs.base import Environment
from tapplan.errors import ConfigError, TapError
from tapplan.neural import softmax_with_temperature

log = logging.getLogger(__name__)


class LatentModel(Protocol):
    def encode(self, state: MDPState) -> Any: ...

    def predict_transition(self, z: Any, action: EditAction, context: MDPState | None = None) -> Any: ...

    def predict_reward(self, z: Any) -> float: ...


class OracleModel:
    """Exact 'world model': the latent is the state itself, transitions are
    ``apply_edit`` and the reward is the environment's."""

    def __init__(self, env: Environment):
        self.env = env

    def encode(self, state: MDPState) -> MDPState:
        return state

    def predict_transition(self, z: MDPState, action: EditAction, context: MDPState | None = None) -> MDPState:
        return MDPState(z.task, apply_edit(z.chain, action))

    def predict_reward(self, z: MDPState) -> float:
        return self.env.evaluate(z.task, z.chain)


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 3
    outer_steps: int = 8
    candidates: int = 10
    temperature: float = 0.1
    selection: str = "argmax"
    continuations: int = 1
    gamma: float = 0.99
    seed: int = 0
    reencode_each_step: bool = True
    probe_env: bool = False
    patience: int | None = 2
    exhaustive: bool = False
    scale_weights: ScaleWeights = ScaleWeights()
    max_retries: int = 5

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.outer_steps < 1 or self.candidates < 1 or self.continuations < 1:
            raise ConfigError("horizon, outer_steps, candidates and continuations must be >= 1")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.selection not in ("argmax", "softmax"):
            raise ConfigError(f"unknown selection mode {self.selection!r}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None")


@dataclass
class EvalCounter:
    transitions: int = 0
    rewards: int = 0


@dataclass
class PlanStep:
    step: int
    candidates: list[EditAction]
    scores: list[float]
    chosen: int
    chain_before: ReasoningChain
    chain_after: ReasoningChain
    probe_reward: float | None = None
    z_before: list[float] | None = None
    z_after: list[float] | None = None
    error: str | None = None

    @property
    def action(self) -> EditAction:
        return self.candidates[self.chosen]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "candidates": [action_to_dict(a) for a in self.candidates],
            "scores": self.scores,
            "chosen": self.chosen,
            "chain_before": self.chain_before.to_lists(),
            "chain_after": self.chain_after.to_lists(),
            "probe_reward": self.probe_reward,
            "z_before": self.z_before,
            "z_after": self.z_after,
            "error": self.error,
        }


@dataclass
class PlanTrajectory:
    task_id: str
    initial_chain: ReasoningChain
    steps: list[PlanStep] = field(default_factory=list)
    initial_probe: float | None = None
    model_evals: int = 0
    reward_evals: int = 0
    stopped_early: bool = False
    error: str | None = None

    @property
    def final_chain(self) -> ReasoningChain:
        return self.steps[-1].chain_after if self.steps else self.initial_chain

    def actions(self) -> list[EditAction]:
        return [s.action for s in self.steps]

    def probe_count(self) -> int:
        return (self.initial_probe is not None) + sum(s.probe_reward is not None for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "initial_chain": self.initial_chain.to_lists(),
            "final_chain": self.final_chain.to_lists(),
            "initial_probe": self.initial_probe,
            "model_evals": self.model_evals,
            "reward_evals": self.reward_evals,
            "stopped_early": self.stopped_early,
            "error": self.error,
            "steps": [s.to_dict() for s in self.steps],
        }


def replay(c0: ReasoningChain, actions: Sequence[EditAction]) -> ReasoningChain:
    chain = c0
    for a in actions:
        chain = apply_edit(chain, a)
    return chain


def _as_list(z: Any) -> list[float] | None:
    return [float(v) for v in z] if isinstance(z, np.ndarray) else None


def _continuation(chain: ReasoningChain, vocab: Sequence[str], cfg: PlannerConfig, rng: np.random.Generator, enum_cfg: EnumConfig) -> tuple[EditAction, ReasoningChain]:
    for _ in range(cfg.max_retries):
        a = sample_action(chain, vocab, cfg.scale_weights, rng, enum_cfg)
        try:
            return a, apply_edit(chain, a)
        except TapError:
            continue
    return NoOp(), chain


def rollout(
    model: LatentModel,
    z: Any,
    first_action: EditAction,
    state_at_z: MDPState,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    vocab: Sequence[str] = (),
    enum_cfg: EnumConfig = DEFAULT_ENUM,
    counter: EvalCounter | None = None,
    log_actions: list[EditAction] | None = None,
) -> Any:
    """Apply ``first_action`` then H-1 sampled continuations in latent space.

    The chain is tracked symbolically alongside the latent so continuation
    actions are always legal for the chain they would act on.
    """
    task, chain = state_at_z.task, state_at_z.chain
    action = first_action
    for h in range(cfg.horizon):
        if h:
            action, _ = _continuation(chain, vocab, cfg, rng, enum_cfg)
            if log_actions is not None:
                log_actions.append(action)
        z = model.predict_transition(z, action, MDPState(task, chain))
        if counter is not None:
            counter.transitions += 1
        if h < cfg.horizon - 1:
            chain = apply_edit(chain, action)
    return z


def score_candidates(
    model: LatentModel,
    z: Any,
    candidates: Sequence[EditAction],
    state: MDPState,
    cfg: PlannerConfig,
    rng: np.random.Generator,
    vocab: Sequence[str] = (),
    enum_cfg: EnumConfig = DEFAULT_ENUM,
    counter: EvalCounter | None = None,
) -> list[float]:
    """Mean predicted terminal reward per candidate over M continuation draws.

    Continuation draw m uses the same sub-seed for every candidate (common
    random numbers), so candidates differ only through their first action.
    """
    if not candidates:
        raise ValueError("no candidates to score")
    seeds = rng.integers(0, 2**63 - 1, size=cfg.continuations)
    scores = []
    for a in candidates:
        total = 0.0
        for s in seeds:
            zH = rollout(model, z, a, state, cfg, np.random.default_rng(int(s)), vocab, enum_cfg, counter)
            total += model.predict_reward(zH)
            if counter is not None:
                counter.rewards += 1
        scores.append(total / cfg.continuations)
    return scores


def select_action(scores: Sequence[float], cfg: PlannerConfig, rng: np.random.Generator) -> int:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0 or not np.all(np.isfinite(scores)):
        raise ValueError("scores must be a non-empty finite vector")
    if cfg.selection == "argmax" or scores.size == 1:
        return int(np.argmax(scores))
    p = softmax_with_temperature(scores, cfg.temperature)
    return int(rng.choice(scores.size, p=p))


def propose(chain: ReasoningChain, vocab: Sequence[str], cfg: PlannerConfig, rng: np.random.Generator, enum_cfg: EnumConfig) -> list[EditAction]:
    if cfg.exhaustive:
        return enumerate_actions(chain, vocab, enum_cfg)
    return sample_candidates(chain, cfg.candidates, vocab, cfg.scale_weights, rng, enum_cfg)


def optimize(
    env: Environment,
    model: LatentModel,
    task: TaskInput,
    c0: ReasoningChain,
    cfg: PlannerConfig = PlannerConfig(),
    vocab: Sequence[str] = (),
    enum_cfg: EnumConfig = DEFAULT_ENUM,
) -> tuple[ReasoningChain, PlanTrajectory]:
    """Run T outer planning steps from ``c0`` and return the final chain.

    The environment is queried only for logging probes (``probe_env``);
    selection uses the model alone.
    """
    rng = np.random.default_rng(cfg.seed)
    counter = EvalCounter()
    traj = PlanTrajectory(task.id, c0)
    chain = c0
    z = model.encode(MDPState(task, chain))
    if cfg.probe_env:
        try:
            traj.initial_probe = env.evaluate(task, chain)
        except TapError as exc:
            traj.error = f"initial probe failed: {exc}"
            return chain, traj
    idle = 0
    for t in range(cfg.outer_steps):
        candidates = propose(chain, vocab, cfg, rng, enum_cfg)
        scores = score_candidates(model, z, candidates, MDPState(task, chain), cfg, rng, vocab, enum_cfg, counter)
        k = select_action(scores, cfg, rng)
        action = candidates[k]
        new_chain = apply_edit(chain, action)
        if cfg.reencode_each_step:
            z_next = model.encode(MDPState(task, new_chain))
        else:
            z_next = model.predict_transition(z, action, MDPState(task, chain))
        step = PlanStep(t, list(candidates), [float(s) for s in scores], k, chain, new_chain,
                        z_before=_as_list(z), z_after=_as_list(z_next))
        traj.steps.append(step)
        if cfg.probe_env:
            try:
                step.probe_reward = env.evaluate(task, new_chain)
            except TapError as exc:
                step.error = traj.error = f"probe failed at step {t}: {exc}"
                log.warning(step.error)
                break
        chain, z = new_chain, z_next
        idle = idle + 1 if isinstance(action, NoOp) else 0
        if cfg.patience is not None and idle >= cfg.patience:
            traj.stopped_early = t < cfg.outer_steps - 1
            break
    traj.model_evals, traj.reward_evals = counter.transitions, counter.rewards
    return chain, traj


def random_edit_baseline(
    env: Environment,
    task: TaskInput,
    c0: ReasoningChain,
    budget: int,
    vocab: Sequence[str],
    weights: ScaleWeights = ScaleWeights(),
    seed: int = 0,
    enum_cfg: EnumConfig = DEFAULT_ENUM,
) -> tuple[ReasoningChain, float, list[float]]:
    """Random edit walk spending ``budget`` environment queries; returns the
    best chain seen (the start chain counts, its reward is known up front)."""
    rng = np.random.default_rng(seed)
    best_chain, best = c0, env.evaluate(task, c0)
    rewards = []
    chain = c0
    for _ in range(budget):
        a = sample_action(chain, vocab, weights, rng, enum_cfg)
        chain = apply_edit(chain, a)
        r = env.evaluate(task, chain)
        rewards.append(r)
        if r > best:
            best_chain, best = chain, r
    return best_chain, best, rewards


def config_dict(cfg: PlannerConfig) -> dict:
    return asdict(cfg)
