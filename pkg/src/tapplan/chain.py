"""Reasoning chains, the multi-scale edit grammar, and candidate generation.

A chain is an ordered tuple of steps; each step is a non-empty tuple of
whitespace-free tokens. Every value here is immutable and every function is
pure, so chains and actions can be shared freely.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

from tapplan.errors import BoundsError, CapacityError, DegenerateSplitError, DomainError

Tokens = tuple[str, ...]


@dataclass(frozen=True)
class ReasoningChain:
    steps: tuple[Tokens, ...] = ()

    def __post_init__(self) -> None:
        steps = tuple(tuple(step) for step in self.steps)
        for step in steps:
            if not step:
                raise ValueError("empty step in chain")
            for tok in step:
                if not isinstance(tok, str) or not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"invalid token {tok!r}")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def of(cls, steps: Iterable[Iterable[str]]) -> "ReasoningChain":
        return cls(tuple(tuple(s) for s in steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.steps)

    def tokens(self) -> list[str]:
        return [tok for step in self.steps for tok in step]

    def to_lists(self) -> list[list[str]]:
        return [list(s) for s in self.steps]


EMPTY_CHAIN = ReasoningChain()


@dataclass(frozen=True)
class TaskInput:
    id: str
    text: str
    expected_answer: str | None = None
    initial_chain: ReasoningChain | None = None

    def __post_init__(self) -> None:
        if not self.text.split():
            raise ValueError(f"task {self.id!r} has no tokens")

    @property
    def tokens(self) -> list[str]:
        return self.text.split()


@dataclass(frozen=True)
class MDPState:
    task: TaskInput
    chain: ReasoningChain


# ---------------------------------------------------------------------------
# Edit actions

TOKEN, STEP, STRUCTURE, NOOP = "token", "step", "structure", "noop"
SCALES = (TOKEN, STEP, STRUCTURE)


@dataclass(frozen=True)
class NoOp:
    scale = NOOP
    op = "noop"


@dataclass(frozen=True)
class TokenAdd:
    step: int
    pos: int
    token: str
    scale = TOKEN
    op = "add"


@dataclass(frozen=True)
class TokenDelete:
    step: int
    pos: int
    scale = TOKEN
    op = "delete"


@dataclass(frozen=True)
class TokenReplace:
    step: int
    pos: int
    token: str
    scale = TOKEN
    op = "replace"


@dataclass(frozen=True)
class StepReorder:
    src: int
    dst: int
    scale = STEP
    op = "reorder"


@dataclass(frozen=True)
class StepSplit:
    step: int
    pos: int
    scale = STEP
    op = "split"


@dataclass(frozen=True)
class StepMerge:
    step: int
    scale = STEP
    op = "merge"


@dataclass(frozen=True)
class AddExample:
    fragment: ReasoningChain
    position: int
    scale = STRUCTURE
    op = "add_example"


@dataclass(frozen=True)
class InstructionEdit:
    step: int
    replacement: Tokens
    scale = STRUCTURE
    op = "instruction_edit"

    def __post_init__(self) -> None:
        object.__setattr__(self, "replacement", tuple(self.replacement))


@dataclass(frozen=True)
class FormatChange:
    template: str
    scale = STRUCTURE
    op = "format_change"


EditAction = Union[
    NoOp, TokenAdd, TokenDelete, TokenReplace, StepReorder, StepSplit, StepMerge,
    AddExample, InstructionEdit, FormatChange,
]

ACTION_TYPES = (
    NoOp, TokenAdd, TokenDelete, TokenReplace, StepReorder, StepSplit, StepMerge,
    AddExample, InstructionEdit, FormatChange,
)
# op-kind names in a fixed order; the world model embeds actions by this index
OP_KINDS = tuple(cls.op for cls in ACTION_TYPES)
KINDS_BY_SCALE = {
    TOKEN: ("add", "delete", "replace"),
    STEP: ("reorder", "split", "merge"),
    STRUCTURE: ("add_example", "instruction_edit", "format_change"),
}
_TYPE_BY_OP = {cls.op: cls for cls in ACTION_TYPES}


def action_to_dict(a: EditAction) -> dict[str, Any]:
    d: dict[str, Any] = {"scale": a.scale, "op": a.op}
    if isinstance(a, AddExample):
        d.update(fragment=a.fragment.to_lists(), position=a.position)
    elif isinstance(a, InstructionEdit):
        d.update(step=a.step, replacement=list(a.replacement))
    elif not isinstance(a, NoOp):
        d.update(a.__dict__)
    return d


def action_from_dict(d: dict[str, Any]) -> EditAction:
    d = dict(d)
    op = d.pop("op")
    scale = d.pop("scale", None)
    cls = _TYPE_BY_OP.get(op)
    if cls is None:
        raise ValueError(f"unknown edit op {op!r}")
    if scale is not None and scale != cls.scale:
        raise ValueError(f"op {op!r} does not belong to scale {scale!r}")
    if cls is AddExample:
        return AddExample(ReasoningChain.of(d["fragment"]), int(d["position"]))
    if cls is InstructionEdit:
        return InstructionEdit(int(d["step"]), tuple(d["replacement"]))
    return cls(**d)


# ---------------------------------------------------------------------------
# Text form

def parse_chain(text: str, step_delimiter: str = "\n") -> ReasoningChain:
    if not step_delimiter:
        raise DomainError("step delimiter must be non-empty")
    steps = [tuple(part.split()) for part in text.split(step_delimiter)]
    return ReasoningChain(tuple(s for s in steps if s))


def render_chain(chain: ReasoningChain, step_delimiter: str = "\n") -> str:
    for step in chain.steps:
        for tok in step:
            if step_delimiter in tok:
                raise DomainError(f"token {tok!r} contains the step delimiter")
    return step_delimiter.join(" ".join(step) for step in chain.steps)


# ---------------------------------------------------------------------------
# Format templates. Re-applying a template is idempotent because known
# prefixes are stripped first.

_NUMBERED = re.compile(r"^\d+:$")


def strip_template_prefix(step: Tokens) -> Tokens:
    if len(step) >= 2 and step[0] == "Step" and _NUMBERED.match(step[1]):
        return step[2:]
    if step and step[0] == "-":
        return step[1:]
    return step


TEMPLATES: dict[str, Callable[[int, Tokens], Tokens]] = {
    "identity": lambda k, step: step,
    "numbered": lambda k, step: ("Step", f"{k + 1}:") + strip_template_prefix(step),
    "bullet": lambda k, step: ("-",) + strip_template_prefix(step),
    "plain": lambda k, step: strip_template_prefix(step),
}
TEMPLATE_NAMES = tuple(TEMPLATES)


# ---------------------------------------------------------------------------
# ApplyEdit

def _check(cond: bool, a: EditAction, index: int, limit: int, what: str = "index") -> None:
    if not cond:
        raise BoundsError(a.scale, a.op, index, limit, what)


def apply_edit(chain: ReasoningChain, action: EditAction) -> ReasoningChain:
    """Return the chain produced by ``action``; ``chain`` is never modified.

    Steps emptied by a deletion are dropped, so a chain never holds an empty
    step. ``TokenAdd(0, 0, tok)`` on the empty chain creates the first step.
    """
    steps = list(chain.steps)
    n = len(steps)
    a = action

    if isinstance(a, NoOp):
        return chain

    if isinstance(a, TokenAdd):
        if n == 0:
            _check(a.step == 0, a, a.step, 1, "step_index")
            _check(a.pos == 0, a, a.pos, 1, "token_position")
            return ReasoningChain(((a.token,),))
        _check(0 <= a.step < n, a, a.step, n, "step_index")
        step = steps[a.step]
        _check(0 <= a.pos <= len(step), a, a.pos, len(step) + 1, "token_position")
        steps[a.step] = step[: a.pos] + (a.token,) + step[a.pos:]
    elif isinstance(a, (TokenDelete, TokenReplace)):
        _check(0 <= a.step < n, a, a.step, n, "step_index")
        step = steps[a.step]
        _check(0 <= a.pos < len(step), a, a.pos, len(step), "token_position")
        if isinstance(a, TokenDelete):
            new = step[: a.pos] + step[a.pos + 1:]
            if new:
                steps[a.step] = new
            else:
                del steps[a.step]
        else:
            steps[a.step] = step[: a.pos] + (a.token,) + step[a.pos + 1:]
    elif isinstance(a, StepReorder):
        _check(0 <= a.src < n, a, a.src, n, "from_index")
        _check(0 <= a.dst < n, a, a.dst, n, "to_index")
        moved = steps.pop(a.src)
        steps.insert(a.dst, moved)
    elif isinstance(a, StepSplit):
        _check(0 <= a.step < n, a, a.step, n, "step_index")
        step = steps[a.step]
        _check(0 <= a.pos <= len(step), a, a.pos, len(step) + 1, "token_position")
        if a.pos in (0, len(step)):
            raise DegenerateSplitError(
                f"step/split at position {a.pos} of a {len(step)}-token step yields an empty step"
            )
        steps[a.step: a.step + 1] = [step[: a.pos], step[a.pos:]]
    elif isinstance(a, StepMerge):
        _check(0 <= a.step < n - 1, a, a.step, max(n - 1, 0), "step_index")
        steps[a.step: a.step + 2] = [steps[a.step] + steps[a.step + 1]]
    elif isinstance(a, AddExample):
        _check(0 <= a.position <= n, a, a.position, n + 1, "position")
        steps[a.position: a.position] = list(a.fragment.steps)
    elif isinstance(a, InstructionEdit):
        _check(0 <= a.step < n, a, a.step, n, "step_index")
        if not a.replacement:
            raise DomainError("instruction edit needs a non-empty replacement step")
        steps[a.step] = a.replacement
    elif isinstance(a, FormatChange):
        fn = TEMPLATES.get(a.template)
        if fn is None:
            raise DomainError(f"unknown format template {a.template!r}")
        steps = [fn(k, s) for k, s in enumerate(steps)]
        steps = [s for s in steps if s]
    else:
        raise TypeError(f"not an edit action: {a!r}")
    return ReasoningChain(tuple(steps))


# ---------------------------------------------------------------------------
# The legal-action grammar: per-kind counts plus an index decoder. Both the
# exhaustive enumerator and the sampler go through these, so they agree.

@dataclass(frozen=True)
class EnumConfig:
    max_enumeration: int = 100_000
    max_tokens: int = 512
    fragments: tuple[ReasoningChain, ...] = ()
    instructions: tuple[Tokens, ...] = ()
    templates: tuple[str, ...] = TEMPLATE_NAMES
    scales: tuple[str, ...] = SCALES


@dataclass(frozen=True)
class ScaleWeights:
    token: float = 0.5
    step: float = 0.3
    structure: float = 0.2

    def __post_init__(self) -> None:
        ws = (self.token, self.step, self.structure)
        if min(ws) < 0 or sum(ws) <= 0:
            raise DomainError(f"scale weights must be non-negative with positive sum, got {ws}")

    def get(self, scale: str) -> float:
        return getattr(self, scale)


TOKEN_ONLY = ScaleWeights(1.0, 0.0, 0.0)
DEFAULT_ENUM = EnumConfig()


def _fitting_fragments(chain: ReasoningChain, cfg: EnumConfig) -> list[ReasoningChain]:
    room = cfg.max_tokens - chain.n_tokens
    return [f for f in cfg.fragments if len(f) and f.n_tokens <= room]


def kind_count(kind: str, chain: ReasoningChain, vocab: Sequence[str], cfg: EnumConfig) -> int:
    lens = [len(s) for s in chain.steps]
    n, V = len(lens), len(vocab)
    if kind == "add":
        if chain.n_tokens >= cfg.max_tokens:
            return 0
        return V if n == 0 else sum(l + 1 for l in lens) * V
    if kind == "delete":
        return sum(lens)
    if kind == "replace":
        return sum(lens) * V
    if kind == "reorder":
        return n * (n - 1)
    if kind == "split":
        return sum(max(l - 1, 0) for l in lens)
    if kind == "merge":
        return max(n - 1, 0)
    if kind == "add_example":
        return (n + 1) * len(_fitting_fragments(chain, cfg))
    if kind == "instruction_edit":
        return n * len(cfg.instructions)
    if kind == "format_change":
        return len(cfg.templates)
    raise ValueError(kind)


def _locate(blocks: Iterable[int], idx: int) -> tuple[int, int]:
    """Map a flat index onto (block number, offset within block)."""
    for b, size in enumerate(blocks):
        if idx < size:
            return b, idx
        idx -= size
    raise IndexError(idx)


def decode_action(kind: str, chain: ReasoningChain, vocab: Sequence[str], cfg: EnumConfig, idx: int) -> EditAction:
    lens = [len(s) for s in chain.steps]
    n, V = len(lens), len(vocab)
    if kind == "add":
        if n == 0:
            return TokenAdd(0, 0, vocab[idx])
        s, r = _locate(((l + 1) * V for l in lens), idx)
        return TokenAdd(s, r // V, vocab[r % V])
    if kind == "delete":
        s, p = _locate(lens, idx)
        return TokenDelete(s, p)
    if kind == "replace":
        s, p = _locate(lens, idx // V)
        return TokenReplace(s, p, vocab[idx % V])
    if kind == "reorder":
        src, j = divmod(idx, n - 1)
        return StepReorder(src, j if j < src else j + 1)
    if kind == "split":
        s, r = _locate((max(l - 1, 0) for l in lens), idx)
        return StepSplit(s, r + 1)
    if kind == "merge":
        return StepMerge(idx)
    if kind == "add_example":
        frags = _fitting_fragments(chain, cfg)
        pos, f = divmod(idx, len(frags))
        return AddExample(frags[f], pos)
    if kind == "instruction_edit":
        s, i = divmod(idx, len(cfg.instructions))
        return InstructionEdit(s, cfg.instructions[i])
    if kind == "format_change":
        return FormatChange(cfg.templates[idx])
    raise ValueError(kind)


def count_actions(chain: ReasoningChain, vocab: Sequence[str], cfg: EnumConfig = DEFAULT_ENUM) -> int:
    return 1 + sum(
        kind_count(k, chain, vocab, cfg) for scale in SCALES if scale in cfg.scales for k in KINDS_BY_SCALE[scale]
    )


def enumerate_actions(chain: ReasoningChain, vocab: Sequence[str], limits: EnumConfig = DEFAULT_ENUM) -> list[EditAction]:
    total = count_actions(chain, vocab, limits)
    if total > limits.max_enumeration:
        raise CapacityError(f"{total} actions exceed max_enumeration={limits.max_enumeration}")
    out: list[EditAction] = [NoOp()]
    for scale in SCALES:
        if scale not in limits.scales:
            continue
        for kind in KINDS_BY_SCALE[scale]:
            out.extend(decode_action(kind, chain, vocab, limits, i) for i in range(kind_count(kind, chain, vocab, limits)))
    return out


def sample_action(
    chain: ReasoningChain,
    vocab: Sequence[str],
    weights: ScaleWeights,
    rng: np.random.Generator,
    cfg: EnumConfig = DEFAULT_ENUM,
) -> EditAction:
    """Draw one non-NoOp legal action: scale by weight, then op kind, then instance.

    Scales with no legal action are excluded before drawing; NoOp is returned
    only when nothing at all is legal.
    """
    counts = {
        scale: {k: kind_count(k, chain, vocab, cfg) for k in KINDS_BY_SCALE[scale]}
        for scale in SCALES
        if scale in cfg.scales and weights.get(scale) > 0
    }
    live = [s for s, ks in counts.items() if any(ks.values())]
    if not live:
        return NoOp()
    w = np.array([weights.get(s) for s in live])
    scale = live[int(rng.choice(len(live), p=w / w.sum()))] if len(live) > 1 else live[0]
    kinds = [k for k, c in counts[scale].items() if c > 0]
    kind = kinds[int(rng.integers(len(kinds)))]
    idx = int(rng.integers(counts[scale][kind]))
    return decode_action(kind, chain, vocab, cfg, idx)


def sample_candidates(
    chain: ReasoningChain,
    k: int,
    vocab: Sequence[str],
    weights: ScaleWeights = ScaleWeights(),
    rng: np.random.Generator | None = None,
    cfg: EnumConfig = DEFAULT_ENUM,
) -> list[EditAction]:
    if k < 1:
        raise DomainError("k must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    return [NoOp()] + [sample_action(chain, vocab, weights, rng, cfg) for _ in range(k - 1)]


# ---------------------------------------------------------------------------
# Transitions

@dataclass(frozen=True, eq=True)
class Transition:
    state: MDPState
    action: EditAction
    next_chain: ReasoningChain
    reward: float
    reward_delta: float
    meta: dict[str, Any] = field(default_factory=dict, hash=False)

    @property
    def next_state(self) -> MDPState:
        return MDPState(self.state.task, self.next_chain)

    @property
    def prev_reward(self) -> float:
        return self.reward - self.reward_delta


def check_transition(t: Transition, prev_reward: float | None = None) -> list[str]:
    """Return a list of invariant violations (empty when ``t`` is well formed)."""
    problems = []
    try:
        if apply_edit(t.state.chain, t.action) != t.next_chain:
            problems.append("next_chain != apply_edit(chain, action)")
    except (BoundsError, DegenerateSplitError, DomainError) as exc:
        problems.append(f"action does not apply: {exc}")
    if not (0.0 <= t.reward <= 1.0):
        problems.append(f"reward {t.reward} outside [0, 1]")
    if prev_reward is not None and abs(t.reward_delta - (t.reward - prev_reward)) > 1e-9:
        problems.append("reward_delta != reward - R(previous chain)")
    return problems
