import csv
import json

import numpy as np
import pytest

from tapplan.chain import ReasoningChain, action_from_dict
from tapplan.checkpoint import load_checkpoint
from tapplan.cli import main
from tapplan.config import AppConfig, check_model_dims, config_from_dict, dumps_config, load_config
from tapplan.datastore import load_dataset
from tapplan.errors import ConfigError
from tapplan.planner import replay
from tapplan.world_model import ModelConfig, WorldModel

SMALL = {
    "model": {"d": 8, "d_emb": 8, "n_buckets": 64, "proj_hidden": 8, "trans_hidden": 8, "reward_hidden": 8},
    "train": {"epochs": 2, "batch_size": 8, "learning_rate": 1e-3},
    "planner": {"outer_steps": 3, "candidates": 4},
    "env": {"kind": "synthetic", "params": {"n_tasks": 4}},
}


@pytest.fixture
def cfg_file(tmp_path):
    def write(extra=None):
        d = json.loads(json.dumps(SMALL))
        for k, v in (extra or {}).items():
            d.setdefault(k, {}).update(v) if isinstance(v, dict) else d.__setitem__(k, v)
        d["paths"] = {"out_dir": str(tmp_path / "runs"), "data": str(tmp_path / "d.jsonl"),
                      "checkpoint": str(tmp_path / "m.tapw")}
        p = tmp_path / f"cfg{len(list(tmp_path.glob('cfg*')))}.json"
        p.write_text(json.dumps(d))
        return str(p)
    return write


# -- config ------------------------------------------------------------------------

def test_config_round_trip_and_defaults(tmp_path):
    cfg = config_from_dict(SMALL)
    assert cfg.model.d == 8 and cfg.planner.candidates == 4 and cfg.env.params.n_tasks == 4
    assert config_from_dict(json.loads(dumps_config(cfg))) == cfg
    assert load_config(None) == AppConfig()
    llm = config_from_dict({"env": {"kind": "llm", "params": {"model": "m", "completions": 2}}})
    assert llm.env.params.completions == 2


@pytest.mark.parametrize("bad,field", [
    ({"model": {"dd": 3}}, "model.dd"),
    ({"env": {"kind": "quantum"}}, "env.kind"),
    ({"train": {"epochs": "many"}}, "train.epochs"),
    ({"planner": {"horizon": 0}}, "planner"),
    ({"paths": {"data": 3}}, "paths.data"),
])
def test_config_errors_name_the_field(bad, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        config_from_dict(bad)


def test_model_dims_check():
    cfg = AppConfig()
    check_model_dims(cfg, ModelConfig())
    with pytest.raises(ConfigError):
        check_model_dims(cfg, ModelConfig(d=64))


# -- cli ---------------------------------------------------------------------------

def test_collect_counts_and_determinism(tmp_path, cfg_file):
    c = cfg_file()
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["--config", c, "collect", "--episodes", "2", "--steps", "3", "--seed", "5", "--out", str(a)]) == 0
    assert main(["--config", c, "collect", "--episodes", "2", "--steps", "3", "--seed", "5", "--out", str(b)]) == 0
    assert len(load_dataset(a)) == 6 and a.read_bytes() == b.read_bytes()


def test_exit_codes(tmp_path, cfg_file, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"env": {"kind": "nope"}}))
    assert main(["--config", str(bad), "collect"]) == 2
    assert "env.kind" in capsys.readouterr().err
    assert main(["--config", cfg_file(), "train", "--data", str(tmp_path / "missing.jsonl")]) == 2
    assert main(["--config", str(tmp_path / "nofile.json"), "collect"]) == 2
    garbage = tmp_path / "g.jsonl"
    garbage.write_text("{not json\n")
    assert main(["--config", cfg_file(), "train", "--data", str(garbage)]) == 3


def test_train_history_and_lr_zero(tmp_path, cfg_file):
    c = cfg_file({"train": {"learning_rate": 0.0, "seed": 3}})
    data = tmp_path / "d.jsonl"
    assert main(["--config", c, "collect", "--episodes", "8", "--steps", "4", "--out", str(data)]) == 0
    out = tmp_path / "m0.tapw"
    assert main(["--config", c, "train", "--data", str(data), "--out", str(out)]) == 0
    hist = json.loads(out.with_suffix(".history.json").read_text())
    assert [h["epoch"] for h in hist] == [1, 2]
    model = load_checkpoint(out)
    init = WorldModel.initialize(model.config, 3)
    assert all(np.array_equal(model.params[k], init.params[k]) for k in init.params)


def test_optimize_oracle_on_solved_task(tmp_path, cfg_file, capsys):
    chain = [["a", "b"], ["c"]]
    tf = tmp_path / "tasks.jsonl"
    tf.write_text(json.dumps({"id": "solved", "text": "solve a b c", "initial_chain": chain, "target": chain}) + "\n")
    out = tmp_path / "traj.json"
    rc = main(["--config", cfg_file(), "optimize", "--model", "oracle", "--task-file", str(tf), "--out", str(out)])
    assert rc == 0
    assert "final reward 1.0000" in capsys.readouterr().out
    traj = json.loads(out.read_text())["trajectories"][0]
    assert traj["final_reward"] == 1.0


def test_optimize_trajectory_replays_and_is_seeded(tmp_path, cfg_file):
    c = cfg_file({"planner": {"patience": None}})
    outs = []
    for i in range(2):
        out = tmp_path / f"t{i}.json"
        assert main(["--config", c, "--seed", "7", "optimize", "--model", "oracle", "--limit", "2", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    for traj in json.loads(outs[0])["trajectories"]:
        actions = [action_from_dict(s["candidates"][s["chosen"]]) for s in traj["steps"]]
        assert replay(ReasoningChain.of(traj["initial_chain"]), actions).to_lists() == traj["final_chain"]


def test_validate_simlemma_and_export(tmp_path, cfg_file):
    c = cfg_file()
    assert main(["--config", c, "validate", "--suite", "simlemma", "--trials", "12", "--out", str(tmp_path / "v")]) == 0
    assert len(json.loads((tmp_path / "v" / "simlemma.json").read_text())) == 12
    data = tmp_path / "d.jsonl"
    assert main(["--config", c, "collect", "--episodes", "2", "--steps", "5", "--out", str(data)]) == 0
    ckpt = tmp_path / "m.tapw"
    assert main(["--config", c, "train", "--data", str(data), "--out", str(ckpt)]) == 0
    out = tmp_path / "z.csv"
    assert main(["--config", c, "export-embeddings", "--model", str(ckpt), "--data", str(data), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 1 + 10 and all(len(r) == 1 + 8 for r in rows)


def test_bench_counts(capsys, cfg_file):
    assert main(["--config", cfg_file(), "bench", "--k", "3", "6", "--h", "2", "--reps", "1"]) == 0
    out = capsys.readouterr().out
    assert "6 transition evals" in out and "12 transition evals" in out
