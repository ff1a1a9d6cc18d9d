"""Finite MDPs with explicit kernels: value iteration, exact policy
evaluation, and bounded kernel perturbations."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tapplan.errors import DomainError


@dataclass(frozen=True)
class TabularMDP:
    P: np.ndarray  # (S, A, S)
    R: np.ndarray  # (S, A), entries in [0, 1]
    gamma: float

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        R = np.asarray(self.R, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise DomainError(f"inconsistent shapes P{P.shape} R{R.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise DomainError("transition rows must be probability vectors")
        if np.any(R < 0) or np.any(R > 1):
            raise DomainError("rewards must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise DomainError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "R": self.R.tolist(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMDP":
        return cls(np.array(d["P"], dtype=float), np.array(d["R"], dtype=float), float(d["gamma"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TabularMDP":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def random_mdp(n_states: int, n_actions: int, gamma: float, rng: np.random.Generator) -> TabularMDP:
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    return TabularMDP(P, rng.uniform(0, 1, size=(n_states, n_actions)), gamma)


@dataclass
class ValueIterationResult:
    values: np.ndarray
    policy: np.ndarray
    residuals: list[float] = field(default_factory=list)


def q_values(mdp: TabularMDP, V: np.ndarray) -> np.ndarray:
    return mdp.R + mdp.gamma * mdp.P @ V


def greedy_policy(mdp: TabularMDP, V: np.ndarray) -> np.ndarray:
    return np.argmax(q_values(mdp, V), axis=1)  # first maximum wins ties


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> ValueIterationResult:
    """Bellman optimality iteration until the sup-norm residual is <= tol."""
    if tol <= 0:
        raise DomainError("tol must be positive")
    V = np.zeros(mdp.n_states)
    residuals = []
    for _ in range(max_iter):
        V_new = q_values(mdp, V).max(axis=1)
        res = float(np.max(np.abs(V_new - V)))
        residuals.append(res)
        V = V_new
        if res <= tol * (1 - mdp.gamma):
            break
    return ValueIterationResult(V, greedy_policy(mdp, V), residuals)


def policy_value(mdp: TabularMDP, policy: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """V^pi by fixed-point iteration. ``policy`` is either an action index per
    state or an (S, A) matrix of action probabilities."""
    policy = np.asarray(policy)
    S = mdp.n_states
    if policy.ndim == 1:
        pi = np.zeros((S, mdp.n_actions))
        pi[np.arange(S), policy.astype(int)] = 1.0
    else:
        pi = policy.astype(float)
    r_pi = (pi * mdp.R).sum(axis=1)
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    V = np.zeros(S)
    for _ in range(max_iter):
        V_new = r_pi + mdp.gamma * P_pi @ V
        done = np.max(np.abs(V_new - V)) <= tol * (1 - mdp.gamma)
        V = V_new
        if done:
            break
    return V


def perturb_mdp(mdp: TabularMDP, delta: float, rng: np.random.Generator) -> TabularMDP:
    """Move every transition row toward a random distribution by at most
    ``delta`` in l1 distance; rewards are untouched."""
    if not 0 <= delta <= 2:
        raise DomainError("delta must lie in [0, 2]")
    if delta == 0:
        return mdp
    S, A, _ = mdp.P.shape
    P = mdp.P.copy()
    for s in range(S):
        for a in range(A):
            u = rng.dirichlet(np.ones(S)) - P[s, a]
            norm = np.abs(u).sum()
            if norm > 0:
                P[s, a] = np.clip(P[s, a] + min(1.0, delta / norm) * u, 0.0, None)
                P[s, a] /= P[s, a].sum()
    return TabularMDP(P, mdp.R.copy(), mdp.gamma)


def max_l1_distance(a: TabularMDP, b: TabularMDP) -> float:
    return float(np.abs(a.P - b.P).sum(axis=2).max())
