"""Latent world model: state encoder, residual latent transition, reward head.

Parameters live in one flat ``name -> ndarray`` dict so that optimizers,
gradient checks and checkpoints all treat them uniformly:

    enc.emb, enc.type, enc.attn.{Wq,Wk,Wv,Wo}, enc.proj.{i}.{W,b}
    act.kind, act.tok, trans.{i}.{W,b}
    rew.{i}.{W,b}
"""
from __future__ import annotations

import logging
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tapplan.chain import (
    AddExample, EditAction, FormatChange, InstructionEdit, MDPState, OP_KINDS, ReasoningChain,
    StepMerge, StepReorder, StepSplit, TokenAdd, TokenDelete, TokenReplace, Transition,
)
from tapplan.errors import ConfigError, NumericsError
from tapplan.neural import (
    MlpParams, OptimizerState, Params, attention_backward, attention_forward, mlp_backward_cache,
    mlp_forward_cache, optimizer_step, sigmoid, sinusoidal_table, xavier_uniform,
)

log = logging.getLogger(__name__)

SEP, STEP_MARK = "<sep>", "<step>"
N_NUMERIC = 8
# token types: task token, marker, chain token absent from the task text,
# chain token present in the task text, repeat of an earlier chain token
TASK_TOKEN, MARKER, CHAIN_OTHER, CHAIN_MATCH, CHAIN_REPEAT = range(5)
N_TYPES = 5
NOOP_KIND = OP_KINDS.index("noop")


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    d_emb: int = 32
    n_buckets: int = 4096
    attention: bool = True
    n_heads: int = 2
    pos_scale: float = 0.1
    max_len: int = 512
    proj_hidden: int = 64
    act_kind_dim: int = 8
    act_tok_buckets: int = 512
    act_tok_dim: int = 8
    trans_hidden: int = 64
    reward_hidden: int = 32
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.n_buckets < 2 or self.act_tok_buckets < 2:
            raise ConfigError("hash bucket counts must be >= 2")
        if self.attention and self.d_emb % self.n_heads:
            raise ConfigError("d_emb must be divisible by n_heads")
        if min(self.d, self.d_emb, self.proj_hidden, self.trans_hidden, self.reward_hidden) < 1:
            raise ConfigError("layer widths must be positive")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def d_act(self) -> int:
        return self.act_kind_dim + N_NUMERIC + 2 * self.act_tok_dim


@dataclass(frozen=True)
class TrainConfig:
    lambda_dyn: float = 1.0
    lambda_rew: float = 1.0
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-4
    seed: int = 0
    holdout_fraction: float = 0.1
    optimizer: str = "adam"
    target_stop_gradient: bool = True
    reward_target: str = "absolute"

    def __post_init__(self) -> None:
        if self.lambda_dyn < 0 or self.lambda_rew < 0 or self.lambda_dyn + self.lambda_rew == 0:
            raise ConfigError("loss weights must be >= 0 and not both zero")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.holdout_fraction <= 0.5:
            raise ConfigError("holdout_fraction must lie in [0, 0.5]")
        if self.reward_target not in ("absolute", "delta"):
            raise ConfigError(f"unknown reward_target {self.reward_target!r}")


# ---------------------------------------------------------------------------
# Tokenization / featurization

def bucket(token: str, n: int) -> int:
    return zlib.crc32(token.encode("utf-8")) % n


def state_tokens(state: MDPState) -> tuple[list[str], list[int]]:
    """Tokens of ``[x; <sep>; c]`` (steps joined by a marker) and their types."""
    toks = state.task.tokens
    types = [TASK_TOKEN] * len(toks)
    in_task = set(toks)
    toks = toks + [SEP]
    types.append(MARKER)
    seen: set[str] = set()
    for i, step in enumerate(state.chain.steps):
        if i:
            toks.append(STEP_MARK)
            types.append(MARKER)
        for t in step:
            toks.append(t)
            types.append(CHAIN_REPEAT if t in seen else CHAIN_MATCH if t in in_task else CHAIN_OTHER)
            seen.add(t)
    return toks, types


def state_ids(state: MDPState, cfg: ModelConfig) -> np.ndarray:
    """(2, L) int array: hash bucket ids and token types."""
    toks, types = state_tokens(state)
    toks, types = toks[: cfg.max_len], types[: cfg.max_len]
    return np.array([[bucket(t, cfg.n_buckets) for t in toks], types], dtype=np.int64)


@dataclass(frozen=True)
class ActionFeatures:
    kind: int
    numeric: tuple[float, ...]
    removed: tuple[int, ...]
    added: tuple[int, ...]


def action_features(a: EditAction, context: MDPState | None, cfg: ModelConfig) -> ActionFeatures:
    """Featurize an action against the state it acts on.

    Numeric part: two normalized indices, counts of removed/added tokens
    split by whether they occur in the task text, then counts of removed
    tokens that survive elsewhere in the chain and of added tokens the chain
    already holds. Without ``context`` the
    indices are unnormalized-free zeros and nothing counts as removed.
    """
    kind = OP_KINDS.index(a.op)
    nb = cfg.act_tok_buckets
    chain = context.chain if context is not None else None
    in_task = set(context.task.tokens) if context is not None else set()
    steps = chain.steps if chain is not None else ()
    n = max(len(steps), 1)

    def step_len(i: int) -> int:
        return len(steps[i]) if 0 <= i < len(steps) else 1

    f0 = f1 = 0.0
    removed: list[str] = []
    added: list[str] = []
    if isinstance(a, (TokenAdd, TokenDelete, TokenReplace, StepSplit)):
        f0, f1 = a.step / n, a.pos / max(step_len(a.step), 1)
        if isinstance(a, (TokenDelete, TokenReplace)) and chain is not None and 0 <= a.step < len(steps):
            if 0 <= a.pos < len(steps[a.step]):
                removed.append(steps[a.step][a.pos])
        if isinstance(a, (TokenAdd, TokenReplace)):
            added.append(a.token)
    elif isinstance(a, StepReorder):
        f0, f1 = a.src / n, a.dst / n
    elif isinstance(a, StepMerge):
        f0 = a.step / n
    elif isinstance(a, AddExample):
        f0 = a.position / n
        added.extend(a.fragment.tokens())
    elif isinstance(a, InstructionEdit):
        f0 = a.step / n
        if chain is not None and 0 <= a.step < len(steps):
            removed.extend(steps[a.step])
        added.extend(a.replacement)
    elif isinstance(a, FormatChange):
        added.append(f"<fmt:{a.template}>")
    rem_in = sum(t in in_task for t in removed)
    add_in = sum(t in in_task for t in added)
    counts = Counter(t for s in steps for t in s)
    rem_dup = sum(counts[t] > 1 for t in removed)
    add_dup = sum(counts[t] > 0 for t in added)
    numeric = (f0, f1, rem_in, len(removed) - rem_in, add_in, len(added) - add_in, rem_dup, add_dup)
    return ActionFeatures(
        kind, tuple(float(v) for v in numeric),
        tuple(bucket(t, nb) for t in removed), tuple(bucket(t, nb) for t in added),
    )


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    L = max(1, max((len(s) for s in seqs), default=1))
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


def _pad_states(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    L = max(s.shape[1] for s in seqs)
    ids = np.zeros((len(seqs), L), dtype=np.int64)
    types = np.zeros((len(seqs), L), dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        n = s.shape[1]
        ids[i, :n], types[i, :n], mask[i, :n] = s[0], s[1], True
    return ids, types, mask


# ---------------------------------------------------------------------------
# Parameters

def _mlp(params: Params, prefix: str, n_layers: int, activation: str) -> MlpParams:
    return MlpParams([(params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"]) for i in range(n_layers)], activation)


def _mlp_grads(prefix: str, grads: list[tuple[np.ndarray, np.ndarray]]) -> Params:
    out = {}
    for i, (gW, gb) in enumerate(grads):
        out[f"{prefix}.{i}.W"], out[f"{prefix}.{i}.b"] = gW, gb
    return out


def init_params(cfg: ModelConfig, seed: int) -> Params:
    """Xavier-uniform weights, zero biases. Lookup tables count as fan-in 1."""
    rng = np.random.default_rng(seed)
    p: Params = {"enc.emb": xavier_uniform(rng, 1, cfg.d_emb, (cfg.n_buckets, cfg.d_emb))}
    p["enc.type"] = xavier_uniform(rng, 1, cfg.d_emb, (N_TYPES, cfg.d_emb))
    if cfg.attention:
        for name in ("Wq", "Wk", "Wv", "Wo"):
            p[f"enc.attn.{name}"] = xavier_uniform(rng, cfg.d_emb, cfg.d_emb)

    def mlp(prefix: str, dims: list[int]) -> None:
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"{prefix}.{i}.W"] = xavier_uniform(rng, a, b)
            p[f"{prefix}.{i}.b"] = np.zeros(b)

    mlp("enc.proj", [cfg.d_emb, cfg.proj_hidden, cfg.d])
    p["act.kind"] = xavier_uniform(rng, 1, cfg.act_kind_dim, (len(OP_KINDS), cfg.act_kind_dim))
    p["act.tok"] = xavier_uniform(rng, 1, cfg.act_tok_dim, (cfg.act_tok_buckets, cfg.act_tok_dim))
    mlp("trans", [cfg.d + cfg.d_act, cfg.trans_hidden, cfg.d])
    mlp("rew", [cfg.d, cfg.reward_hidden, 1])
    return p


# ---------------------------------------------------------------------------
# Batched forward/backward for the three networks

_PE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _pe(max_len: int, dim: int) -> np.ndarray:
    key = (max_len, dim)
    if key not in _PE_CACHE:
        _PE_CACHE[key] = sinusoidal_table(max_len, dim)
    return _PE_CACHE[key]


def encoder_forward(p: Params, cfg: ModelConfig, seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, dict]:
    ids, types, mask = _pad_states(seqs)
    L = ids.shape[1]
    X = p["enc.emb"][ids] + p["enc.type"][types] + cfg.pos_scale * _pe(cfg.max_len, cfg.d_emb)[:L]
    cache: dict = {"ids": ids, "types": types, "mask": mask}
    if cfg.attention:
        Y, cache["attn"] = attention_forward(
            X, mask, p["enc.attn.Wq"], p["enc.attn.Wk"], p["enc.attn.Wv"], p["enc.attn.Wo"], cfg.n_heads
        )
    else:
        Y = X
    counts = mask.sum(axis=1, keepdims=True).astype(float)
    pooled = (Y * mask[..., None]).sum(axis=1) / counts
    z, cache["proj"] = mlp_forward_cache(_mlp(p, "enc.proj", 2, cfg.activation), pooled)
    cache["counts"] = counts
    return z, cache


def encoder_backward(p: Params, cfg: ModelConfig, cache: dict, gz: np.ndarray) -> Params:
    mask, ids, counts = cache["mask"], cache["ids"], cache["counts"]
    mgrads, gpooled = mlp_backward_cache(_mlp(p, "enc.proj", 2, cfg.activation), cache["proj"], gz)
    grads = _mlp_grads("enc.proj", mgrads)
    gY = (gpooled / counts)[:, None, :] * mask[..., None]
    if cfg.attention:
        agrads, gX = attention_backward(
            gY, cache["attn"], p["enc.attn.Wq"], p["enc.attn.Wk"], p["enc.attn.Wv"], p["enc.attn.Wo"]
        )
        grads.update({f"enc.attn.{k}": v for k, v in agrads.items()})
    else:
        gX = gY
    gemb = np.zeros_like(p["enc.emb"])
    np.add.at(gemb, ids[mask], gX[mask])
    grads["enc.emb"] = gemb
    gtype = np.zeros_like(p["enc.type"])
    np.add.at(gtype, cache["types"][mask], gX[mask])
    grads["enc.type"] = gtype
    return grads


def _bag(table: np.ndarray, seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, tuple]:
    ids, mask = _pad(seqs)
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1).astype(float)
    vec = (table[ids] * mask[..., None]).sum(axis=1) / counts
    return vec, (ids, mask, counts)


def _bag_backward(table: np.ndarray, cache: tuple, g: np.ndarray) -> np.ndarray:
    ids, mask, counts = cache
    gt = np.zeros_like(table)
    rows = np.broadcast_to((g / counts)[:, None, :], mask.shape + (g.shape[1],))
    np.add.at(gt, ids[mask], rows[mask])
    return gt


def transition_forward(p: Params, cfg: ModelConfig, z: np.ndarray, feats: Sequence[ActionFeatures]) -> tuple[np.ndarray, dict]:
    kinds = np.array([f.kind for f in feats], dtype=np.int64)
    numeric = np.array([f.numeric for f in feats], dtype=float).reshape(len(feats), N_NUMERIC)
    rem, rem_cache = _bag(p["act.tok"], [f.removed for f in feats])
    add, add_cache = _bag(p["act.tok"], [f.added for f in feats])
    u = np.concatenate([z, p["act.kind"][kinds], numeric, rem, add], axis=1)
    core, mcache = mlp_forward_cache(_mlp(p, "trans", 2, cfg.activation), u)
    # NoOp is the identity edit by definition, so its latent step is fixed at zero
    live = (kinds != NOOP_KIND)[:, None]
    return z + core * live, {"kinds": kinds, "live": live, "rem": rem_cache, "add": add_cache, "mlp": mcache}


def transition_backward(p: Params, cfg: ModelConfig, cache: dict, gout: np.ndarray) -> tuple[Params, np.ndarray]:
    mgrads, gu = mlp_backward_cache(_mlp(p, "trans", 2, cfg.activation), cache["mlp"], gout * cache["live"])
    grads = _mlp_grads("trans", mgrads)
    d, k, t = cfg.d, cfg.act_kind_dim, cfg.act_tok_dim
    gz = gout + gu[:, :d]
    gkind = np.zeros_like(p["act.kind"])
    np.add.at(gkind, cache["kinds"], gu[:, d: d + k])
    o = d + k + N_NUMERIC
    grads["act.kind"] = gkind
    grads["act.tok"] = _bag_backward(p["act.tok"], cache["rem"], gu[:, o: o + t]) + _bag_backward(
        p["act.tok"], cache["add"], gu[:, o + t: o + 2 * t]
    )
    return grads, gz


def reward_forward(p: Params, cfg: ModelConfig, z: np.ndarray) -> tuple[np.ndarray, dict]:
    logit, mcache = mlp_forward_cache(_mlp(p, "rew", 2, cfg.activation), z)
    r = sigmoid(logit[:, 0])
    return r, {"mlp": mcache, "r": r}


def reward_backward(p: Params, cfg: ModelConfig, cache: dict, gr: np.ndarray) -> tuple[Params, np.ndarray]:
    r = cache["r"]
    glogit = (gr * r * (1.0 - r))[:, None]
    mgrads, gz = mlp_backward_cache(_mlp(p, "rew", 2, cfg.activation), cache["mlp"], glogit)
    return _mlp_grads("rew", mgrads), gz


def _accumulate(into: Params, more: Params) -> None:
    for k, v in more.items():
        into[k] = into[k] + v if k in into else v


# ---------------------------------------------------------------------------
# Model object

@dataclass
class WorldModel:
    config: ModelConfig
    params: Params
    meta: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "WorldModel":
        return cls(config, init_params(config, seed), {"init_seed": seed})

    def encode(self, state: MDPState) -> np.ndarray:
        return self.encode_many([state])[0]

    def encode_many(self, states: Sequence[MDPState]) -> np.ndarray:
        z, _ = encoder_forward(self.params, self.config, [state_ids(s, self.config) for s in states])
        return z

    def predict_transition(self, z: np.ndarray, action: EditAction, context: MDPState | None = None) -> np.ndarray:
        out, _ = transition_forward(
            self.params, self.config, np.asarray(z, dtype=float)[None, :], [action_features(action, context, self.config)]
        )
        return out[0]

    def predict_reward(self, z: np.ndarray) -> float:
        r, _ = reward_forward(self.params, self.config, np.asarray(z, dtype=float)[None, :])
        return float(r[0])


def encode(model: WorldModel, state: MDPState) -> np.ndarray:
    return model.encode(state)


def predict_transition(model: WorldModel, z: np.ndarray, action: EditAction, context: MDPState | None = None) -> np.ndarray:
    return model.predict_transition(z, action, context)


def predict_reward(model: WorldModel, z: np.ndarray) -> float:
    return model.predict_reward(z)


# ---------------------------------------------------------------------------
# Losses

@dataclass(frozen=True)
class PreparedBatch:
    """Transitions converted to hashed ids and action features once, up front."""

    src: list[np.ndarray]
    dst: list[np.ndarray]
    feats: list[ActionFeatures]
    target: np.ndarray

    def __len__(self) -> int:
        return len(self.src)

    def subset(self, idx: Sequence[int]) -> "PreparedBatch":
        return PreparedBatch(
            [self.src[i] for i in idx], [self.dst[i] for i in idx], [self.feats[i] for i in idx], self.target[list(idx)]
        )


def prepare(transitions: Sequence[Transition], cfg: ModelConfig, reward_target: str = "absolute") -> PreparedBatch:
    if reward_target == "absolute":
        target = np.array([t.reward for t in transitions], dtype=float)
    else:
        # delta lives in [-1, 1]; the logistic head predicts (1 + delta) / 2
        target = np.array([(1.0 + t.reward_delta) / 2.0 for t in transitions], dtype=float)
    return PreparedBatch(
        [state_ids(t.state, cfg) for t in transitions],
        [state_ids(t.next_state, cfg) for t in transitions],
        [action_features(t.action, t.state, cfg) for t in transitions],
        target,
    )


@dataclass(frozen=True)
class LossValues:
    total: float
    dyn: float
    rew: float


def loss_and_grads(
    params: Params,
    cfg: ModelConfig,
    batch: PreparedBatch,
    tcfg: TrainConfig = TrainConfig(),
    need_grads: bool = True,
    frozen_targets: np.ndarray | None = None,
) -> tuple[LossValues, Params]:
    """Weighted dynamics + reward loss over ``batch`` and its gradient.

    dynamics: mean ||h(s') - (h(s) + core(h(s), embed(a)))||^2
    reward:   mean (R_hat(h(s')) - R(x, c'))^2, where c' is the post-edit chain

    ``frozen_targets`` replaces h(s') in the dynamics term by a constant; with
    ``target_stop_gradient`` the returned gradient is exactly the gradient of
    that frozen-target loss, which is what finite differences can check.
    """
    B = len(batch)
    if B == 0:
        raise ValueError("empty batch")
    z_all, enc_cache = encoder_forward(params, cfg, batch.src + batch.dst)
    zs, zn = z_all[:B], z_all[B:]
    pred, tcache = transition_forward(params, cfg, zs, batch.feats)
    diff = pred - (zn if frozen_targets is None else frozen_targets)
    dyn = float(np.mean(np.sum(diff * diff, axis=1)))
    r, rcache = reward_forward(params, cfg, zn)
    rerr = r - batch.target
    rew = float(np.mean(rerr * rerr))
    values = LossValues(tcfg.lambda_dyn * dyn + tcfg.lambda_rew * rew, dyn, rew)
    if not need_grads:
        return values, {}

    gpred = tcfg.lambda_dyn * 2.0 * diff / B
    grads, gzs = transition_backward(params, cfg, tcache, gpred)
    rgrads, gzn = reward_backward(params, cfg, rcache, tcfg.lambda_rew * 2.0 * rerr / B)
    _accumulate(grads, rgrads)
    if not tcfg.target_stop_gradient and frozen_targets is None:
        gzn = gzn - gpred
    _accumulate(grads, encoder_backward(params, cfg, enc_cache, np.concatenate([gzs, gzn], axis=0)))
    return values, grads


def dynamics_loss(model: WorldModel, batch: Sequence[Transition]) -> float:
    return loss_and_grads(model.params, model.config, prepare(batch, model.config), need_grads=False)[0].dyn


def reward_loss(model: WorldModel, batch: Sequence[Transition]) -> float:
    return loss_and_grads(model.params, model.config, prepare(batch, model.config), need_grads=False)[0].rew


def total_loss(model: WorldModel, batch: Sequence[Transition], cfg: TrainConfig = TrainConfig()) -> float:
    prepared = prepare(batch, model.config, cfg.reward_target)
    return loss_and_grads(model.params, model.config, prepared, cfg, need_grads=False)[0].total


# ---------------------------------------------------------------------------
# Training

@dataclass
class TrainingHistory:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    holdout_loss: list[float] = field(default_factory=list)
    holdout_dyn: list[float] = field(default_factory=list)
    holdout_rew: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def split_holdout(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = int(round(fraction * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train(
    dataset: Sequence[Transition],
    arch: ModelConfig,
    cfg: TrainConfig = TrainConfig(),
    checkpoint_dir: str | Path | None = None,
    init: WorldModel | None = None,
) -> tuple[WorldModel, TrainingHistory]:
    """Minibatch Adam (or SGD) on the weighted loss; deterministic given ``cfg.seed``."""
    prepared = prepare(dataset, arch, cfg.reward_target)
    train_idx, hold_idx = split_holdout(len(prepared), cfg.holdout_fraction, cfg.seed)
    if len(train_idx) < cfg.batch_size:
        raise ConfigError(f"{len(train_idx)} training transitions < batch_size {cfg.batch_size}")
    train_set = prepared.subset(train_idx)
    hold_set = prepared.subset(hold_idx) if len(hold_idx) else None

    model = init if init is not None else WorldModel.initialize(arch, cfg.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    opt = OptimizerState(kind=cfg.optimizer, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed + 1)
    history = TrainingHistory()
    last_good: Path | None = None
    n = len(train_set)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            mb = train_set.subset(order[start: start + cfg.batch_size])
            values, grads = loss_and_grads(params, arch, mb, cfg)
            if not np.isfinite(values.total):
                raise NumericsError(f"non-finite loss at epoch {epoch}; last good checkpoint: {last_good}")
            params, opt = optimizer_step(opt, params, grads)
            total += values.total * len(mb)
        n_used = (n // cfg.batch_size) * cfg.batch_size
        history.epoch.append(epoch)
        history.train_loss.append(total / n_used)
        if hold_set is not None:
            hv, _ = loss_and_grads(params, arch, hold_set, cfg, need_grads=False)
            history.holdout_loss.append(hv.total)
            history.holdout_dyn.append(hv.dyn)
            history.holdout_rew.append(hv.rew)
        log.debug("epoch %d train %.6f", epoch, history.train_loss[-1])
        if checkpoint_dir is not None:
            from tapplan.checkpoint import save_checkpoint

            last_good = Path(checkpoint_dir) / f"epoch{epoch:03d}.tapw"
            save_checkpoint(WorldModel(arch, params, {**model.meta, "epoch": epoch}), last_good)

    meta = {**model.meta, "train_config": asdict(cfg), "epochs_run": cfg.epochs}
    return WorldModel(arch, params, meta), history
