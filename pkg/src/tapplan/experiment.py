"""End-to-end run on the synthetic oracle: collect random-edit transitions,
train the world model, then plan on held-out tasks against a random-edit
baseline that gets the same number of environment queries."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tapplan.envs.base import CountingEnv
from tapplan.envs.collect import collect_transitions
from tapplan.envs.synthetic import TaskFamily, make_tasks, oracle_for
from tapplan.planner import LatentModel, PlannerConfig, optimize, random_edit_baseline
from tapplan.world_model import ModelConfig, TrainConfig, TrainingHistory, WorldModel, train

log = logging.getLogger(__name__)

# desk settings used for the end-to-end check; the train/planner defaults
# elsewhere are left at their library values
DESK_MODEL = ModelConfig(d=32, proj_hidden=128, trans_hidden=128)
DESK_TRAIN = TrainConfig(epochs=50, learning_rate=1e-3)


@dataclass
class EndToEndReport:
    n_transitions: int
    train_seconds: float
    final_train_loss: float
    holdout_dyn: float | None
    holdout_rew: float | None
    seeds: list[int]
    initial: list[float]                  # per held-out task
    planner: list[list[float]]            # [seed][task] final reward
    baseline: list[list[float]]           # [seed][task] best reward seen
    planner_queries: list[int]            # per seed, total over tasks
    baseline_queries: list[int]
    history: dict = field(default_factory=dict)

    @property
    def mean_gain_per_task(self) -> np.ndarray:
        return np.mean(self.planner, axis=0) - np.asarray(self.initial)

    @property
    def improved_fraction(self) -> float:
        return float(np.mean(self.mean_gain_per_task > 0))

    @property
    def paired_diffs(self) -> np.ndarray:
        """Per seed: planner mean final reward minus baseline mean."""
        return np.mean(self.planner, axis=1) - np.mean(self.baseline, axis=1)


def collect_and_train(
    family: TaskFamily = TaskFamily(),
    n_train_tasks: int = 100,
    task_seed: int = 1000,
    episodes: int = 500,
    steps: int = 10,
    collect_seed: int = 0,
    model_cfg: ModelConfig = DESK_MODEL,
    train_cfg: TrainConfig = DESK_TRAIN,
) -> tuple[WorldModel, TrainingHistory, int, float]:
    tasks = make_tasks(n_train_tasks, task_seed, family, "train")
    env = oracle_for(tasks)
    data = collect_transitions(env, [s.task for s in tasks], "random", episodes, steps, collect_seed, vocab=family.vocab)
    t0 = time.perf_counter()
    model, history = train(data, model_cfg, train_cfg)
    return model, history, len(data), time.perf_counter() - t0


def evaluate_planner(
    model: LatentModel,
    family: TaskFamily = TaskFamily(),
    n_tasks: int = 20,
    task_seed: int = 2000,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    planner: PlannerConfig = PlannerConfig(patience=None),
) -> tuple[list[float], list[list[float]], list[list[float]], list[int], list[int]]:
    """Planner vs random-edit baseline on held-out tasks.

    The planner probes the environment once at the start and once per outer
    step (T + 1 queries); the baseline gets the same T + 1 queries.
    """
    held = make_tasks(n_tasks, task_seed, family, "held")
    env = oracle_for(held)
    initial = [env.evaluate(s.task, s.start) for s in held]
    P, B, qp, qb = [], [], [], []
    for seed in seeds:
        cfg = PlannerConfig(**{**planner.__dict__, "seed": int(seed), "probe_env": True})
        pe, be = CountingEnv(env), CountingEnv(env)
        prow, brow = [], []
        for s in held:
            final, _ = optimize(pe, model, s.task, s.start, cfg, family.vocab)
            prow.append(env.evaluate(s.task, final))
            _, best, _ = random_edit_baseline(be, s.task, s.start, cfg.outer_steps, family.vocab, seed=int(seed))
            brow.append(best)
        P.append(prow)
        B.append(brow)
        qp.append(pe.queries)
        qb.append(be.queries)
        log.info("seed %d: planner %.4f baseline %.4f", seed, np.mean(prow), np.mean(brow))
    return initial, P, B, qp, qb


def run_end_to_end(
    family: TaskFamily = TaskFamily(),
    model_cfg: ModelConfig = DESK_MODEL,
    train_cfg: TrainConfig = DESK_TRAIN,
    episodes: int = 500,
    steps: int = 10,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    planner: PlannerConfig = PlannerConfig(patience=None),
) -> EndToEndReport:
    model, hist, n, secs = collect_and_train(family, episodes=episodes, steps=steps, model_cfg=model_cfg, train_cfg=train_cfg)
    initial, P, B, qp, qb = evaluate_planner(model, family, seeds=seeds, planner=planner)
    return EndToEndReport(
        n, secs, hist.train_loss[-1],
        hist.holdout_dyn[-1] if hist.holdout_dyn else None,
        hist.holdout_rew[-1] if hist.holdout_rew else None,
        [int(s) for s in seeds], initial, P, B, qp, qb, hist.to_dict(),
    )
