"""Collect -> train -> plan on the synthetic oracle and compare with random edits.

    python scripts/run_end_to_end.py --out runs/e2e.json
"""
import argparse
import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from tapplan.experiment import DESK_MODEL, DESK_TRAIN, run_end_to_end


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--steps", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=DESK_TRAIN.epochs)
    ap.add_argument("--lr", type=float, default=DESK_TRAIN.learning_rate)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="runs/e2e.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    train_cfg = dataclasses.replace(DESK_TRAIN, epochs=args.epochs, learning_rate=args.lr)
    rep = run_end_to_end(model_cfg=DESK_MODEL, train_cfg=train_cfg, episodes=args.episodes, steps=args.steps,
                         seeds=range(args.seeds))
    diffs = rep.paired_diffs
    print(f"{rep.n_transitions} transitions, trained in {rep.train_seconds:.0f}s, "
          f"held-out dyn {rep.holdout_dyn:.4f} rew {rep.holdout_rew:.4f}")
    print(f"tasks improved: {rep.improved_fraction:.0%}")
    print(f"planner - baseline per seed: {np.round(diffs, 4).tolist()}  mean {diffs.mean():+.4f}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    payload = dataclasses.asdict(rep)
    payload.update(improved_fraction=rep.improved_fraction, paired_diffs=diffs.tolist(),
                   model=dataclasses.asdict(DESK_MODEL), train=dataclasses.asdict(train_cfg))
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")


if __name__ == "__main__":
    main()
