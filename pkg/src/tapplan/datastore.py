"""JSON persistence: transition datasets (one record per line), task files,
and pretty-printed run reports."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, TextIO

from tapplan.chain import (
    MDPState, ReasoningChain, TaskInput, Transition, action_from_dict, action_to_dict, check_transition,
)
from tapplan.errors import ParseError

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Record codecs

def task_to_dict(task: TaskInput) -> dict[str, Any]:
    d: dict[str, Any] = {"id": task.id, "text": task.text}
    if task.expected_answer is not None:
        d["expected_answer"] = task.expected_answer
    if task.initial_chain is not None:
        d["initial_chain"] = task.initial_chain.to_lists()
    return d


def _chain(value: Any) -> ReasoningChain:
    if isinstance(value, str):
        from tapplan.chain import parse_chain

        return parse_chain(value)
    return ReasoningChain.of(value)


def task_from_dict(d: dict[str, Any]) -> TaskInput:
    init = d.get("initial_chain")
    return TaskInput(
        str(d["id"]), d["text"], d.get("expected_answer"), _chain(init) if init is not None else None
    )


def transition_to_dict(t: Transition) -> dict[str, Any]:
    return {
        "task": task_to_dict(t.state.task),
        "chain": t.state.chain.to_lists(),
        "action": action_to_dict(t.action),
        "next_chain": t.next_chain.to_lists(),
        "reward": t.reward,
        "reward_delta": t.reward_delta,
        "meta": t.meta,
    }


def transition_from_dict(d: dict[str, Any]) -> Transition:
    return Transition(
        MDPState(task_from_dict(d["task"]), ReasoningChain.of(d["chain"])),
        action_from_dict(d["action"]),
        ReasoningChain.of(d["next_chain"]),
        float(d["reward"]),
        float(d["reward_delta"]),
        dict(d.get("meta", {})),
    )


def dumps_transition(t: Transition) -> str:
    return json.dumps(transition_to_dict(t), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Datasets

class DatasetWriter:
    """Append-only single writer; records are written in call order."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: TextIO | None = self.path.open("a", encoding="utf-8", newline="\n")

    def append(self, t: Transition) -> None:
        if self._fh is None:
            raise ValueError(f"writer for {self.path} is closed")
        self._fh.write(dumps_transition(t) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "DatasetWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def append_transition(path: str | Path, t: Transition) -> None:
    try:
        with DatasetWriter(path) as w:
            w.append(t)
    except OSError as exc:
        raise OSError(f"cannot append to {path}: {exc}") from exc


def write_dataset(path: str | Path, transitions: Iterable[Transition]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for t in transitions:
            fh.write(dumps_transition(t) + "\n")


class DatasetValidationError(ParseError):
    def __init__(self, problems: list[tuple[int, str]]):
        self.problems = problems
        lines = "; ".join(f"line {n}: {msg}" for n, msg in problems[:10])
        super().__init__(f"{len(problems)} invariant violation(s): {lines}", line_no=problems[0][0])


def load_dataset(path: str | Path, validate: bool = False) -> list[Transition]:
    out: list[Transition] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(transition_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}: malformed transition record: {exc}", line_no=line_no) from exc
    if validate:
        problems = []
        for i, t in enumerate(out):
            prev_reward = None
            if i and out[i - 1].meta.get("episode") == t.meta.get("episode") and "episode" in t.meta:
                if out[i - 1].next_chain == t.state.chain:
                    prev_reward = out[i - 1].reward
            problems += [(i + 1, msg) for msg in check_transition(t, prev_reward)]
        if problems:
            raise DatasetValidationError(problems)
    return out


def load_tasks(path: str | Path) -> list[tuple[TaskInput, ReasoningChain | None]]:
    """Task file: one JSON object per line with ``id``, ``text`` and optional
    ``expected_answer``, ``initial_chain`` and ``target`` (chains as lists of
    steps or as newline-delimited text)."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                target = d.get("target")
                out.append((task_from_dict(d), _chain(target) if target is not None else None))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}: malformed task record: {exc}", line_no=line_no) from exc
    return out


def write_tasks(path: str | Path, tasks: Iterable[tuple[TaskInput, ReasoningChain | None]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for task, target in tasks:
            d = task_to_dict(task)
            if target is not None:
                d["target"] = target.to_lists()
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Reports

@dataclass
class RunReport:
    run_id: str
    config: dict[str, Any]
    seed: int
    metrics: list[dict[str, Any]] = field(default_factory=list)
    env_queries: int = 0
    wall_clock: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ParseError(f"unsupported report schema_version {d.get('schema_version')!r}")
        return cls(**d)


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_report(report: RunReport, path: str | Path) -> None:
    write_json(path, asdict(report))


def read_report(path: str | Path) -> RunReport:
    try:
        return RunReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}", line_no=exc.lineno) from exc


class Stopwatch:
    def __init__(self) -> None:
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start
