"""Small dense numerics: MLPs, one self-attention block, softmax, optimizers,
and a finite-difference gradient checker. Everything is float64 numpy.

Weights follow the ``y = x @ W + b`` convention, so ``W`` has shape
``(fan_in, fan_out)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from tapplan.errors import DomainError, NumericsError, ShapeError

Params = dict[str, np.ndarray]


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...] | None = None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


# ---------------------------------------------------------------------------
# MLP

_ACT = {
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
    "relu": (lambda x: np.maximum(x, 0.0), lambda h: (h > 0).astype(h.dtype)),
}


@dataclass
class MlpParams:
    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = "tanh"

    @property
    def dims(self) -> list[int]:
        return [self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers]


def init_mlp(dims: list[int], rng: np.random.Generator, activation: str = "tanh") -> MlpParams:
    layers = [(xavier_uniform(rng, i, o), np.zeros(o)) for i, o in zip(dims[:-1], dims[1:])]
    return MlpParams(layers, activation)


def mlp_forward_cache(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping every layer input (the backward pass needs them)."""
    act = _ACT[params.activation][0]
    if x.shape[-1] != params.layers[0][0].shape[0]:
        raise ShapeError(f"input width {x.shape[-1]} != first layer fan-in {params.layers[0][0].shape[0]}")
    cache = [x]
    h = x
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        h = h @ W + b
        if i < last:
            h = act(h)
        cache.append(h)
    return h, cache


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return mlp_forward_cache(params, np.asarray(x, dtype=float))[0]


def mlp_backward_cache(
    params: MlpParams, cache: list[np.ndarray], upstream: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    dact = _ACT[params.activation][1]
    if upstream.shape != cache[-1].shape:
        raise ShapeError(f"upstream grad shape {upstream.shape} != output shape {cache[-1].shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    g = upstream
    last = len(params.layers) - 1
    for i in range(last, -1, -1):
        W, _ = params.layers[i]
        if i < last:
            g = g * dact(cache[i + 1])
        x_in = cache[i]
        if g.ndim == 1:
            gW, gb = np.outer(x_in, g), g.copy()
        else:
            x2 = x_in.reshape(-1, x_in.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            gW, gb = x2.T @ g2, g2.sum(axis=0)
        grads.append((gW, gb))
        g = g @ W.T
    grads.reverse()
    return grads, g


def mlp_backward(
    params: MlpParams, x: np.ndarray, upstream_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Reverse-mode gradients of ``upstream_grad . mlp_forward(params, x)``.

    Returns per-layer ``(dW, db)`` and the gradient with respect to ``x``.
    """
    _, cache = mlp_forward_cache(params, np.asarray(x, dtype=float))
    return mlp_backward_cache(params, cache, np.asarray(upstream_grad, dtype=float))


# ---------------------------------------------------------------------------
# Multi-head self-attention with a residual connection: Y = X + Attn(X) Wo

def attention_forward(
    X: np.ndarray, mask: np.ndarray, Wq: np.ndarray, Wk: np.ndarray, Wv: np.ndarray, Wo: np.ndarray, n_heads: int
) -> tuple[np.ndarray, dict]:
    B, L, e = X.shape
    if e % n_heads:
        raise ShapeError(f"embedding width {e} not divisible by {n_heads} heads")
    dh = e // n_heads

    def heads(M: np.ndarray) -> np.ndarray:
        return M.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)

    Q, K, V = heads(X @ Wq), heads(X @ Wk), heads(X @ Wv)
    S = Q @ K.transpose(0, 1, 3, 2) / np.sqrt(dh)
    S = np.where(mask[:, None, None, :], S, -np.inf)
    S = S - S.max(axis=-1, keepdims=True)
    P = np.exp(S)
    P /= P.sum(axis=-1, keepdims=True)
    O = (P @ V).transpose(0, 2, 1, 3).reshape(B, L, e)
    Y = X + O @ Wo
    return Y, {"X": X, "Q": Q, "K": K, "V": V, "P": P, "O": O, "n_heads": n_heads}


def attention_backward(
    gY: np.ndarray, cache: dict, Wq: np.ndarray, Wk: np.ndarray, Wv: np.ndarray, Wo: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    X, Q, K, V, P, O = (cache[k] for k in ("X", "Q", "K", "V", "P", "O"))
    B, L, e = X.shape
    h = cache["n_heads"]
    dh = e // h
    X2 = X.reshape(-1, e)
    gO = gY @ Wo.T
    g_Wo = O.reshape(-1, e).T @ gY.reshape(-1, e)
    gOh = gO.reshape(B, L, h, dh).transpose(0, 2, 1, 3)
    gP = gOh @ V.transpose(0, 1, 3, 2)
    gV = P.transpose(0, 1, 3, 2) @ gOh
    gS = P * (gP - (gP * P).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    gQ = gS @ K
    gK = gS.transpose(0, 1, 3, 2) @ Q

    def merge(M: np.ndarray) -> np.ndarray:
        return M.transpose(0, 2, 1, 3).reshape(-1, e)

    gQ, gK, gV = merge(gQ), merge(gK), merge(gV)
    grads = {"Wq": X2.T @ gQ, "Wk": X2.T @ gK, "Wv": X2.T @ gV, "Wo": g_Wo}
    gX = gY + (gQ @ Wq.T + gK @ Wk.T + gV @ Wv.T).reshape(B, L, e)
    return grads, gX


def sinusoidal_table(max_len: int, dim: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


# ---------------------------------------------------------------------------
# Softmax / logistic

def softmax_with_temperature(values, tau: float) -> np.ndarray:
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("softmax input must be finite")
    s = (v - v.max()) / tau
    p = np.exp(s)
    return p / p.sum()


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# Optimizers. ``optimizer_step`` returns fresh params and state; nothing is
# updated in place.

@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise DomainError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate < 0:
            raise DomainError("learning rate must be non-negative")


def optimizer_step(state: OptimizerState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> tuple[Params, OptimizerState]:
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"{name}: grad shape {g.shape} != param shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in parameter {name!r}")
    lr = state.learning_rate
    new = dict(params)
    if state.kind == "sgd":
        for name, g in grads.items():
            new[name] = params[name] - lr * g
        return new, replace(state, step=state.step + 1)

    t = state.step + 1
    m, v = dict(state.m), dict(state.v)
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        mi = state.beta1 * m.get(name, 0.0) + (1.0 - state.beta1) * g
        vi = state.beta2 * v.get(name, 0.0) + (1.0 - state.beta2) * g * g
        m[name], v[name] = mi, vi
        new[name] = params[name] - lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)
    return new, replace(state, step=t, m=m, v=v)


# ---------------------------------------------------------------------------
# Gradient checking

def grad_check(
    f: Callable[[Params], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    names: list[str] | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f(params)`` returns ``(value, grads)``. The relative error denominator
    is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 0 < eps <= 1e-2:
        raise DomainError(f"eps must lie in (0, 1e-2], got {eps}")
    base = {k: np.array(v, dtype=float) for k, v in params.items()}
    value, analytic = f(base)
    if not np.isfinite(value):
        raise NumericsError("objective is not finite at the base point")
    worst = 0.0
    for name in names or list(base):
        p = base[name]
        ga = np.asarray(analytic.get(name, np.zeros_like(p)), dtype=float)
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = f(base)[0]
            flat[i] = old - eps
            fm = f(base)[0]
            flat[i] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericsError(f"objective not finite while perturbing {name}[{i}]")
            num = (fp - fm) / (2 * eps)
            ana = ga.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
