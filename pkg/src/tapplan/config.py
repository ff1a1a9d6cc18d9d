"""Application config: one JSON document, strictly validated.

Sections: ``env`` (kind + per-kind params), ``model``, ``train``, ``planner``,
``paths`` and a top-level ``seed``. Unknown keys anywhere are errors that
name the offending field.
"""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from tapplan.chain import ScaleWeights
from tapplan.envs.llm import LlmEnvConfig
from tapplan.envs.synthetic import TaskFamily
from tapplan.errors import ConfigError, TapError
from tapplan.planner import PlannerConfig
from tapplan.world_model import ModelConfig, TrainConfig

ENV_KINDS = ("synthetic", "llm")


@dataclass(frozen=True)
class SyntheticEnvParams:
    similarity: str = "token_f1"
    noise: float = 0.0
    noise_seed: int = 0
    n_tasks: int = 100
    task_seed: int = 1000
    family: TaskFamily = TaskFamily()

    def __post_init__(self) -> None:
        from tapplan.envs.similarity import SIMILARITIES

        if self.similarity not in SIMILARITIES:
            raise ConfigError(f"env.params.similarity: unknown similarity {self.similarity!r}")
        if self.noise < 0:
            raise ConfigError("env.params.noise must be >= 0")
        if self.n_tasks < 1:
            raise ConfigError("env.params.n_tasks must be >= 1")


@dataclass(frozen=True)
class EnvSection:
    kind: str = "synthetic"
    params: Any = field(default_factory=SyntheticEnvParams)

    def __post_init__(self) -> None:
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"env.kind: unknown environment kind {self.kind!r}; choose from {list(ENV_KINDS)}")
        want = SyntheticEnvParams if self.kind == "synthetic" else LlmEnvConfig
        if not isinstance(self.params, want):
            raise ConfigError(f"env.params: expected {want.__name__} for kind {self.kind!r}")


@dataclass(frozen=True)
class PathsSection:
    data: str = "runs/transitions.jsonl"
    checkpoint: str = "runs/model.tapw"
    out_dir: str = "runs"
    task_file: str | None = None


@dataclass(frozen=True)
class AppConfig:
    env: EnvSection = field(default_factory=EnvSection)
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    planner: PlannerConfig = PlannerConfig()
    paths: PathsSection = PathsSection()
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def replace(self, **changes: Any) -> "AppConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Strict decoding

def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value: Any, tp: Any, where: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if tp is Any:
        return value
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        errors = []
        for alt in args:
            if alt is type(None):
                continue
            try:
                return _coerce(value, alt, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[0] if errors else f"{where}: invalid value {value!r}")
    if _is_dataclass_type(tp):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{where}: expected an object, got {type(value).__name__}")
        return _build(tp, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value))
        if args and len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(v, a, f"{where}[{i}]") for i, (v, a) in enumerate(zip(value, args or [Any] * len(value))))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls: type, data: Mapping[str, Any], where: str) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key" if where else f"{unknown[0]}: unknown key")
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        if cls is EnvSection and name == "params":
            continue
        kwargs[name] = _coerce(value, hints[name], path)
    if cls is EnvSection:
        kind = kwargs.get("kind", "synthetic")
        if kind not in ENV_KINDS:
            raise ConfigError(f"env.kind: unknown environment kind {kind!r}; choose from {list(ENV_KINDS)}")
        pcls = SyntheticEnvParams if kind == "synthetic" else LlmEnvConfig
        kwargs["params"] = _build(pcls, data.get("params", {}), f"{where}.params")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(where) else f"{where}: {msg}") from exc
    except TapError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any]) -> AppConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config root must be a JSON object")
    cfg = _build(AppConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data)


def validate(cfg: AppConfig) -> None:
    """Cross-section checks beyond the per-section invariants."""
    if cfg.model.d < 1:
        raise ConfigError("model.d must be >= 1")
    if not isinstance(cfg.planner.scale_weights, ScaleWeights):
        raise ConfigError("planner.scale_weights must be an object with token/step/structure")


def check_model_dims(cfg: AppConfig, model_config: ModelConfig) -> None:
    """A checkpoint must match the configured architecture before planning."""
    if model_config.d != cfg.model.d:
        raise ConfigError(f"model.d: checkpoint has d={model_config.d}, config expects d={cfg.model.d}")


def dumps_config(cfg: AppConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
