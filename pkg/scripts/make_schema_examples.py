"""Regenerate the golden examples under docs/schemas from the live code."""
import dataclasses
import json
from pathlib import Path

from tapplan.chain import MDPState, ReasoningChain, TaskInput, TokenDelete, Transition, apply_edit
from tapplan.checkpoint import save_checkpoint
from tapplan.config import AppConfig, dumps_config
from tapplan.datastore import RunReport, dumps_transition, write_report, write_tasks
from tapplan.envs import SyntheticOracleEnv
from tapplan.planner import OracleModel, PlannerConfig, optimize
from tapplan.world_model import ModelConfig, WorldModel

OUT = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    target = ReasoningChain.of([["add", "3", "and", "4"], ["total", "is", "7"]])
    start = ReasoningChain.of([["add", "3", "and", "and", "4"], ["total", "is", "7"]])
    task = TaskInput("demo-0", "what is 3 plus 4", expected_answer="7", initial_chain=start)
    env = SyntheticOracleEnv({task.id: target})

    a = TokenDelete(0, 3)
    nxt = apply_edit(start, a)
    r0, r1 = env.evaluate(task, start), env.evaluate(task, nxt)
    t = Transition(MDPState(task, start), a, nxt, r1, r1 - r0, {"episode": 0, "step": 0, "seed": 0, "policy": "random"})
    (OUT / "transition.jsonl").write_text(dumps_transition(t) + "\n")

    write_tasks(OUT / "tasks.jsonl", [(task, target)])

    cfg = PlannerConfig(horizon=1, outer_steps=2, candidates=3, probe_env=True, patience=None)
    final, traj = optimize(env, OracleModel(env), task, start, cfg, ["add", "3", "4", "7", "and", "is", "total"])
    (OUT / "trajectory.json").write_text(json.dumps(
        {"planner": dataclasses.asdict(cfg),
         "trajectories": [traj.to_dict() | {"final_reward": env.evaluate(task, final)}]}, indent=2) + "\n")

    write_report(RunReport("optimize-0", {"planner": {"horizon": 1}}, 0,
                           [{"task_id": task.id, "final_reward": 1.0, "steps": 2}], env_queries=4, wall_clock=0.01),
                 OUT / "report.json")
    (OUT / "config.json").write_text(dumps_config(AppConfig()) + "\n")

    tiny = WorldModel.initialize(ModelConfig(d=2, d_emb=2, n_buckets=2, n_heads=1, proj_hidden=2, act_kind_dim=1,
                                             act_tok_buckets=2, act_tok_dim=1, trans_hidden=2, reward_hidden=1), 0)
    save_checkpoint(tiny, OUT / "checkpoint.tapw")
    print(f"wrote golden examples to {OUT}")


if __name__ == "__main__":
    main()
