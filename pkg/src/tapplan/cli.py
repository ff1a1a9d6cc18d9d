"""``tap`` command line: collect, train, optimize, validate, bench, export-embeddings.

Exit codes: 0 success, 2 config/usage, 3 environment or I/O, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from tapplan.chain import MDPState, render_chain
from tapplan.config import AppConfig, check_model_dims, load_config
from tapplan.datastore import (
    RunReport, Stopwatch, load_dataset, load_tasks, write_dataset, write_json, write_report,
)
from tapplan.envs.base import CountingEnv
from tapplan.envs.synthetic import SyntheticOracleEnv, make_tasks, oracle_for
from tapplan.errors import ConfigError, EnvError, NumericsError, ParseError, TapError
from tapplan.planner import OracleModel, optimize, replay

log = logging.getLogger("tapplan")

EXIT_OK, EXIT_CONFIG, EXIT_ENV, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Environment + task setup

def _vocab(cfg: AppConfig, tasks) -> list[str]:
    if cfg.env.kind == "synthetic":
        vocab = list(cfg.env.params.family.vocab)
    else:
        vocab = []
    seen = set(vocab)
    for task, _ in tasks:
        for tok in task.tokens:
            if tok not in seen:
                seen.add(tok)
                vocab.append(tok)
    return vocab


def build_env(cfg: AppConfig, task_file: str | None):
    """Returns (env, [(task, target-or-None)], vocab)."""
    path = task_file or cfg.paths.task_file
    if cfg.env.kind == "synthetic":
        p = cfg.env.params
        if path:
            tasks = load_tasks(_existing(path, "task file"))
            missing = [t.id for t, target in tasks if target is None]
            if missing:
                raise ConfigError(f"task file {path}: synthetic env needs a 'target' for task {missing[0]!r}")
            env = SyntheticOracleEnv({t.id: target for t, target in tasks}, p.similarity, p.noise, p.noise_seed)
        else:
            synth = make_tasks(p.n_tasks, p.task_seed, p.family, "task")
            env = oracle_for(synth, p.similarity, p.noise, p.noise_seed)
            tasks = [(s.task, s.target) for s in synth]
    else:
        from tapplan.envs.llm import LlmEnv

        if not path:
            raise ConfigError("paths.task_file: the llm environment needs a task file")
        tasks = load_tasks(_existing(path, "task file"))
        env = LlmEnv(cfg.env.params)
    return env, tasks, _vocab(cfg, tasks)


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_model(spec: str, env):
    if spec == "oracle":
        return OracleModel(env)
    from tapplan.checkpoint import load_checkpoint

    return load_checkpoint(_existing(spec, "model checkpoint"))


# ---------------------------------------------------------------------------
# Commands

def cmd_collect(cfg: AppConfig, args) -> int:
    from tapplan.envs.collect import collect_transitions

    env, tasks, vocab = build_env(cfg, args.task_file)
    counting = CountingEnv(env)
    model = _load_model(args.model, env) if args.model else None
    if args.policy == "planner" and model is None:
        raise UsageError("--policy planner needs --model")
    out = Path(args.out or cfg.paths.data)
    clock = Stopwatch()
    data = collect_transitions(
        counting, [t for t, _ in tasks], args.policy, args.episodes, args.steps, cfg.seed,
        vocab=vocab, weights=cfg.planner.scale_weights, model=model, planner_cfg=cfg.planner,
    )
    write_dataset(out, data)
    mean = float(np.mean([t.reward for t in data])) if data else float("nan")
    print(f"collected {len(data)} transitions -> {out} (mean reward {mean:.4f})")
    if args.report:
        write_report(RunReport(f"collect-{cfg.seed}", cfg.to_dict(), cfg.seed,
                               [{"transitions": len(data), "mean_reward": mean}],
                               counting.queries, clock.elapsed()), args.report)
    return EXIT_OK


def cmd_train(cfg: AppConfig, args) -> int:
    from tapplan.checkpoint import save_checkpoint
    from tapplan.world_model import train

    data = load_dataset(_existing(args.data or cfg.paths.data, "data file"), validate=True)
    out = Path(args.out or cfg.paths.checkpoint)
    clock = Stopwatch()
    model, history = train(data, cfg.model, cfg.train)
    save_checkpoint(model, out)
    hist_path = Path(args.history) if args.history else out.with_suffix(".history.json")
    write_json(hist_path, [
        {"epoch": e, "train_loss": history.train_loss[i],
         **({"holdout_loss": history.holdout_loss[i], "holdout_dyn": history.holdout_dyn[i],
             "holdout_rew": history.holdout_rew[i]} if history.holdout_loss else {})}
        for i, e in enumerate(history.epoch)
    ])
    print(f"trained {cfg.train.epochs} epochs on {len(data)} transitions -> {out}")
    if args.report:
        write_report(RunReport(f"train-{cfg.seed}", cfg.to_dict(), cfg.seed,
                               [dataclasses.asdict(history)], 0, clock.elapsed()), args.report)
    return EXIT_OK


def cmd_optimize(cfg: AppConfig, args) -> int:
    env, tasks, vocab = build_env(cfg, args.task_file)
    counting = CountingEnv(env)
    model = _load_model(args.model or cfg.paths.checkpoint, env)
    if not isinstance(model, OracleModel):
        check_model_dims(cfg, model.config)
    if args.limit is not None:
        tasks = tasks[: args.limit]
    pcfg = cfg.planner
    if isinstance(model, OracleModel) and pcfg.horizon > 1:
        # exact scores need no lookahead; random continuations would only add noise
        log.info("oracle model: planning with horizon 1 instead of %d", pcfg.horizon)
        pcfg = dataclasses.replace(pcfg, horizon=1)
    clock = Stopwatch()
    results, metrics = [], []
    status = EXIT_OK
    for task, _ in tasks:
        c0 = counting.initial_chain(task)
        final, traj = optimize(counting, model, task, c0, pcfg, vocab)
        if traj.error:
            log.error("task %s: %s", task.id, traj.error)
            status = EXIT_ENV
        if replay(c0, traj.actions()) != final:
            raise TapError(f"task {task.id}: trajectory does not replay to its final chain")
        reward = None
        if not traj.error:
            try:
                reward = counting.evaluate(task, final)
            except EnvError as exc:
                log.error("task %s: final evaluation failed: %s", task.id, exc)
                status = EXIT_ENV
        results.append({**traj.to_dict(), "final_reward": reward, "final_text": render_chain(final)})
        metrics.append({"task_id": task.id, "final_reward": reward, "steps": len(traj.steps)})
        shown = "n/a" if reward is None else f"{reward:.4f}"
        print(f"[{task.id}] final reward {shown}")
        print(render_chain(final))
    out = Path(args.out or Path(cfg.paths.out_dir) / "trajectories.json")
    write_json(out, {"planner": dataclasses.asdict(pcfg), "trajectories": results})
    if args.report:
        write_report(RunReport(f"optimize-{pcfg.seed}", cfg.to_dict(), pcfg.seed, metrics,
                               counting.queries, clock.elapsed()), args.report)
    return status


def cmd_validate(cfg: AppConfig, args) -> int:
    from tapplan import theory

    out_dir = Path(args.out or cfg.paths.out_dir)
    if args.suite == "simlemma":
        res = theory.run_simulation_lemma_suite(n_trials=args.trials, seed=cfg.seed)
        ok = all(r.satisfied for r in res)
        print(f"simulation bound satisfied in {sum(r.satisfied for r in res)}/{len(res)} trials; "
              f"classical bound in {sum(r.classical_satisfied for r in res)}/{len(res)}")
    elif args.suite == "convergence":
        res = theory.run_convergence_suite(seeds=tuple(range(args.seeds)))
        ok = res.slope < 0
        print(f"log-log slope {res.slope:.3f} (reference -0.5, gap {res.slope_gap:+.3f}); errors {res.errors}")
    else:
        res = theory.run_multiscale_suite(n_tasks=args.tasks, seeds=tuple(range(args.seeds)))
        ok = res.median_multiscale <= res.median_token_only
        print(f"median edits to {res.threshold}: multi-scale {res.median_multiscale}, token-only {res.median_token_only}")
    theory.write_suite(res, out_dir / f"{args.suite}.json", out_dir / f"{args.suite}.csv")
    return EXIT_OK if ok else 1


def cmd_bench(cfg: AppConfig, args) -> int:
    from tapplan import theory

    rows = theory.run_complexity_bench(args.k, args.h, args.d or [cfg.model.d], args.reps,
                                       cfg.planner.continuations, seed=cfg.seed)
    for r in rows:
        print(f"K={r.candidates} H={r.horizon} d={r.d} M={r.continuations}: "
              f"{r.transition_evals} transition evals, {r.reward_evals} reward evals, {r.median_seconds * 1e3:.3f} ms")
    if args.out:
        theory.write_suite(rows, args.out, Path(args.out).with_suffix(".csv"))
    return EXIT_OK


def cmd_export_embeddings(cfg: AppConfig, args) -> int:
    from tapplan.checkpoint import load_checkpoint

    model = load_checkpoint(_existing(args.model or cfg.paths.checkpoint, "model checkpoint"))
    data = load_dataset(_existing(args.data or cfg.paths.data, "data file"))
    states: list[tuple[str, MDPState]] = [(f"{t.state.task.id}:{i}", t.state) for i, t in enumerate(data)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"z{j}" for j in range(model.config.d)])
        for sid, state in states:
            w.writerow([sid] + [repr(float(v)) for v in model.encode(state)])
    print(f"wrote {len(states)} embeddings -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tap", description="Plan reasoning-chain edits with a learned latent world model.")
    ap.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed (and the planner seed)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")

    p = sub.add_parser("collect", parents=[common], help="collect transitions from an environment")
    p.add_argument("--env", choices=["synthetic", "llm"], help="override env.kind")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--policy", choices=["random", "planner"], default="random")
    p.add_argument("--model", help="checkpoint (or 'oracle') for planner-guided collection")
    p.add_argument("--task-file")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", parents=[common], help="train the world model on a dataset")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--history")
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", parents=[common], help="optimize chains for tasks")
    p.add_argument("--model", help="checkpoint path or 'oracle'")
    p.add_argument("--task-file")
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", parents=[common], help="run a theory suite")
    p.add_argument("--suite", choices=["simlemma", "convergence", "multiscale"], required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", parents=[common], help="time one planning step")
    p.add_argument("--k", type=int, nargs="+", default=[8, 16])
    p.add_argument("--h", type=int, nargs="+", default=[3])
    p.add_argument("--d", type=int, nargs="+")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-embeddings", parents=[common], help="write (id, z) rows for dataset states")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = cfg.replace(seed=args.seed, planner=dataclasses.replace(cfg.planner, seed=args.seed))
        if getattr(args, "env", None) and args.env != cfg.env.kind:
            from tapplan.config import config_from_dict

            d = cfg.to_dict()
            d["env"] = {"kind": args.env}
            cfg = config_from_dict(d)
        return args.func(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"tap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"tap: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EnvError, ParseError, OSError) as exc:
        print(f"tap: environment/I-O failure: {exc}", file=sys.stderr)
        return EXIT_ENV
    except TapError as exc:
        print(f"tap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
