"""Empirical checks of the planning theory: value-gap bounds on tabular MDPs,
estimation-rate fits for the transition model, multi-scale vs token-only
edit efficiency, and per-step planning cost.

Every suite returns plain records and can write them as JSON plus CSV.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from tapplan.chain import OP_KINDS, TOKEN_ONLY, EnumConfig, MDPState, ScaleWeights
from tapplan.envs.synthetic import REORDER_FAMILY, TaskFamily, make_tasks, oracle_for
from tapplan.envs.tabular import max_l1_distance, perturb_mdp, policy_value, random_mdp, value_iteration
from tapplan.errors import ConfigError, InsufficientGrid, NumericsError
from tapplan.neural import OptimizerState, optimizer_step
from tapplan.planner import EvalCounter, OracleModel, PlannerConfig, optimize, propose, score_candidates
from tapplan.world_model import (
    ActionFeatures, ModelConfig, N_NUMERIC, WorldModel, init_params, transition_backward, transition_forward,
)

log = logging.getLogger(__name__)

BOUND_TOL = 1e-9


# ---------------------------------------------------------------------------
# Value-gap bounds

@dataclass
class BoundCheckResult:
    trial: int
    mdp_seed: int
    n_states: int
    n_actions: int
    delta: float
    horizon: int
    gamma: float
    measured_delta: float
    gap: float
    bound: float
    satisfied: bool
    margin: float
    classical_bound: float
    classical_satisfied: bool
    classical_margin: float


def simulation_bound(delta: float, horizon: int, gamma: float) -> float:
    return horizon * delta / (1.0 - gamma) ** 2


def classical_bound(delta: float, gamma: float, r_max: float = 1.0) -> float:
    return 2.0 * gamma * delta * r_max / (1.0 - gamma) ** 2


def run_simulation_lemma_suite(
    n_trials: int = 100,
    states: tuple[int, int] = (2, 6),
    actions: tuple[int, int] = (2, 3),
    deltas: Sequence[float] = (0.05, 0.1, 0.2),
    horizons: Sequence[int] = (3,),
    gammas: Sequence[float] = (0.5, 0.9),
    seed: int = 0,
) -> list[BoundCheckResult]:
    """Per trial: random MDP, perturbed copy at l1 row distance <= delta,
    optimal policy of the copy, and its value loss measured on the true MDP
    (max over start states)."""
    if any(not 0 <= g <= 0.95 for g in gammas):
        raise ConfigError("gamma grid must lie in [0, 0.95]")
    if any(h < 2 for h in horizons):
        raise ConfigError("horizons must be >= 2")
    if not deltas or not horizons or not gammas:
        raise ConfigError("grids must be non-empty")
    root = np.random.default_rng(seed)
    out = []
    for i in range(n_trials):
        mdp_seed = int(root.integers(2**31))
        rng = np.random.default_rng(mdp_seed)
        delta = float(deltas[i % len(deltas)])
        gamma = float(gammas[(i // len(deltas)) % len(gammas)])
        H = int(horizons[(i // (len(deltas) * len(gammas))) % len(horizons)])
        S = int(rng.integers(states[0], states[1] + 1))
        A = int(rng.integers(actions[0], actions[1] + 1))
        true = random_mdp(S, A, gamma, rng)
        model = perturb_mdp(true, delta, rng)
        pi_star = value_iteration(true).policy
        pi_hat = value_iteration(model).policy
        gap = float(np.max(policy_value(true, pi_star) - policy_value(true, pi_hat)))
        rhs = simulation_bound(delta, H, gamma)
        crhs = classical_bound(delta, gamma, float(true.R.max()))
        out.append(BoundCheckResult(
            i, mdp_seed, S, A, delta, H, gamma, max_l1_distance(true, model), gap, rhs,
            gap <= rhs + BOUND_TOL, rhs - gap, crhs, gap <= crhs + BOUND_TOL, crhs - gap,
        ))
    return out


def median_gap_by_delta(results: Sequence[BoundCheckResult]) -> dict[float, float]:
    by: dict[float, list[float]] = {}
    for r in results:
        by.setdefault(r.delta, []).append(r.gap)
    return {d: float(np.median(v)) for d, v in sorted(by.items())}


# ---------------------------------------------------------------------------
# Estimation rate of the transition model

@dataclass(frozen=True)
class TeacherConfig:
    """Latent-level teacher: a randomly initialized transition network maps
    (z, action features) to z'; targets get Gaussian noise of std ``noise``."""

    d: int = 8
    hidden: int = 16
    noise: float = 0.05
    n_test: int = 1000
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 3e-3
    teacher_seed: int = 12345

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            d=self.d, d_emb=8, n_buckets=16, attention=False, n_heads=1, proj_hidden=8,
            act_kind_dim=4, act_tok_buckets=32, act_tok_dim=4, trans_hidden=self.hidden, reward_hidden=4,
        )


@dataclass
class RateFit:
    ns: list[int]
    errors: list[float]
    per_seed: list[list[float]]
    slope: float
    intercept: float
    seeds: list[int]
    theoretical_slope: float = -0.5
    dropped: list[dict] = field(default_factory=list)

    @property
    def slope_gap(self) -> float:
        return self.slope - self.theoretical_slope


_TRANS_KEYS = ("act.kind", "act.tok", "trans.0.W", "trans.0.b", "trans.1.W", "trans.1.b")


def _random_inputs(n: int, cfg: ModelConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[ActionFeatures]]:
    z = rng.standard_normal((n, cfg.d))
    live_kinds = [k for k, name in enumerate(OP_KINDS) if name != "noop"]
    feats = []
    for _ in range(n):
        feats.append(ActionFeatures(
            int(rng.choice(live_kinds)),
            tuple(float(v) for v in rng.uniform(0, 1, N_NUMERIC)),
            tuple(int(v) for v in rng.integers(0, cfg.act_tok_buckets, int(rng.integers(0, 2)))),
            tuple(int(v) for v in rng.integers(0, cfg.act_tok_buckets, int(rng.integers(0, 2)))),
        ))
    return z, feats


def _fit_student(cfg: ModelConfig, tc: TeacherConfig, z, feats, target, seed: int) -> dict[str, np.ndarray]:
    full = init_params(cfg, seed)
    params = {k: full[k] for k in _TRANS_KEYS}
    opt = OptimizerState("adam", tc.learning_rate)
    rng = np.random.default_rng(seed)
    n = len(z)
    for _ in range(tc.epochs):
        order = rng.permutation(n)
        for s in range(0, n, tc.batch_size):
            idx = order[s: s + tc.batch_size]
            pred, cache = transition_forward(params, cfg, z[idx], [feats[i] for i in idx])
            g = 2.0 * (pred - target[idx]) / len(idx)
            grads, _ = transition_backward(params, cfg, cache, g)
            params, opt = optimizer_step(opt, params, {k: grads[k] for k in _TRANS_KEYS})
    return params


def run_convergence_suite(
    ns: Sequence[int] = (250, 1000, 4000),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    teacher: TeacherConfig = TeacherConfig(),
) -> RateFit:
    """Held-out squared distance between student and (noise-free) teacher
    transitions as a function of training-set size, with a log-log fit over
    the per-n medians."""
    ns = [int(n) for n in ns]
    if len(set(ns)) < 3:
        raise InsufficientGrid(f"need at least 3 distinct sample sizes, got {ns}")
    if ns != sorted(ns):
        raise ConfigError("sample-size grid must be increasing")
    cfg = teacher.model_config()
    tparams = init_params(cfg, teacher.teacher_seed)
    per_seed: list[list[float]] = []
    dropped = []
    for seed in seeds:
        rng = np.random.default_rng([teacher.teacher_seed, seed])
        zt, ft = _random_inputs(teacher.n_test, cfg, rng)
        yt, _ = transition_forward(tparams, cfg, zt, ft)
        row = []
        for n in ns:
            z, f = _random_inputs(n, cfg, rng)
            y, _ = transition_forward(tparams, cfg, z, f)
            y = y + teacher.noise * rng.standard_normal(y.shape)
            try:
                student = _fit_student(cfg, teacher, z, f, y, seed)
                pred, _ = transition_forward(student, cfg, zt, ft)
                err = float(np.mean(np.sum((pred - yt) ** 2, axis=1)))
                if not np.isfinite(err):
                    raise NumericsError("non-finite held-out error")
            except NumericsError as exc:
                dropped.append({"seed": int(seed), "n": n, "reason": str(exc)})
                err = float("nan")
            row.append(err)
        per_seed.append(row)
    errors = [float(np.nanmedian([r[j] for r in per_seed])) for j in range(len(ns))]
    slope, intercept = np.polyfit(np.log(ns), np.log(errors), 1)
    return RateFit(ns, errors, per_seed, float(slope), float(intercept), [int(s) for s in seeds], dropped=dropped)


# ---------------------------------------------------------------------------
# Multi-scale vs token-only editing

@dataclass
class MultiscaleRun:
    task_id: str
    seed: int
    sampler: str
    edits_to_threshold: int | None
    final_reward: float
    scales_used: list[str]


@dataclass
class MultiscaleReport:
    threshold: float
    budget: int
    runs: list[MultiscaleRun]
    median_multiscale: float
    median_token_only: float


def _edits_to(rewards: Sequence[float], threshold: float) -> int | None:
    for i, r in enumerate(rewards):
        if r >= threshold:
            return i
    return None


def run_multiscale_suite(
    n_tasks: int = 20,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    family: TaskFamily = REORDER_FAMILY,
    threshold: float = 0.95,
    budget: int = 30,
    candidates: int = 40,
    task_seed: int = 7,
    multiscale: ScaleWeights = ScaleWeights(),
) -> MultiscaleReport:
    """Greedy oracle-scored planning (H=1) with the full sampler and with the
    token-only sampler at identical K and step budget. A run that never
    reaches the threshold counts as ``budget + 1`` edits in the medians."""
    tasks = make_tasks(n_tasks, task_seed, family, "reorder")
    env = oracle_for(tasks, similarity="levenshtein")
    model = OracleModel(env)
    enum_cfg = EnumConfig(fragments=(), instructions=(), templates=("identity",))
    runs = []
    for seed in seeds:
        for st in tasks:
            for name, weights in (("multiscale", multiscale), ("token_only", TOKEN_ONLY)):
                cfg = PlannerConfig(horizon=1, outer_steps=budget, candidates=candidates, seed=seed,
                                    probe_env=True, patience=None, scale_weights=weights)
                r0 = env.evaluate(st.task, st.start)
                if r0 >= threshold:
                    runs.append(MultiscaleRun(st.task.id, int(seed), name, 0, r0, []))
                    continue
                _, traj = optimize(env, model, st.task, st.start, cfg, family.vocab, enum_cfg)
                rewards = [r0] + [s.probe_reward for s in traj.steps]
                runs.append(MultiscaleRun(
                    st.task.id, int(seed), name, _edits_to(rewards, threshold), rewards[-1],
                    sorted({s.action.scale for s in traj.steps}),
                ))

    def med(name: str) -> float:
        return float(np.median([r.edits_to_threshold if r.edits_to_threshold is not None else budget + 1
                                for r in runs if r.sampler == name]))

    return MultiscaleReport(threshold, budget, runs, med("multiscale"), med("token_only"))


# ---------------------------------------------------------------------------
# Planning cost

@dataclass
class BenchRow:
    candidates: int
    horizon: int
    d: int
    continuations: int
    transition_evals: int
    reward_evals: int
    median_seconds: float


def run_complexity_bench(
    ks: Sequence[int] = (8, 16),
    hs: Sequence[int] = (3,),
    ds: Sequence[int] = (32,),
    reps: int = 20,
    continuations: int = 1,
    warmup: int = 3,
    seed: int = 0,
) -> list[BenchRow]:
    """Median wall-clock of one candidate-scoring pass (a planning step) with
    an untrained model, plus exact model-evaluation counts."""
    if not ks or not hs or not ds or reps < 1:
        raise ConfigError("bench grids must be non-empty and reps >= 1")
    fam = TaskFamily()
    st = make_tasks(1, seed, fam, "bench")[0]
    state = MDPState(st.task, st.start)
    rows = []
    for d in ds:
        model = WorldModel.initialize(ModelConfig(d=d), seed)
        z = model.encode(state)
        for H in hs:
            for K in ks:
                cfg = PlannerConfig(horizon=H, candidates=K, continuations=continuations, seed=seed)
                cands = propose(st.start, fam.vocab, cfg, np.random.default_rng(seed), EnumConfig())
                times = []
                counter = EvalCounter()
                for r in range(warmup + reps):
                    counter = EvalCounter()
                    t0 = time.perf_counter()
                    score_candidates(model, z, cands, state, cfg, np.random.default_rng(seed), fam.vocab,
                                     counter=counter)
                    if r >= warmup:
                        times.append(time.perf_counter() - t0)
                rows.append(BenchRow(K, H, d, continuations, counter.transitions, counter.rewards,
                                     float(np.median(times))))
    return rows


# ---------------------------------------------------------------------------
# Output

def to_records(obj: Any) -> list[dict]:
    if isinstance(obj, MultiscaleReport):
        return [asdict(r) for r in obj.runs]
    if isinstance(obj, RateFit):
        return [{"seed": s, "n": n, "error": e} for s, row in zip(obj.seeds, obj.per_seed) for n, e in zip(obj.ns, row)]
    return [asdict(r) for r in obj]


def write_suite(obj: Any, json_path: str | Path, csv_path: str | Path | None = None) -> None:
    """JSON report of the whole result plus a flat CSV of trial rows."""
    payload = asdict(obj) if not isinstance(obj, list) else [asdict(r) for r in obj]
    if isinstance(obj, RateFit):
        payload["slope_gap"] = obj.slope_gap
    Path(json_path).parent.mkdir(parents=True, exist_ok=True)
    Path(json_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if csv_path is not None:
        rows = to_records(obj)
        with Path(csv_path).open("w", encoding="utf-8", newline="") as fh:
            if rows:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                for r in rows:
                    w.writerow({k: json.dumps(v) if isinstance(v, list) else v for k, v in r.items()})
