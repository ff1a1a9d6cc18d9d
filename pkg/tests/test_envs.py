import numpy as np
import pytest

from tapplan.chain import ReasoningChain, TaskInput, apply_edit, check_transition
from tapplan.envs import (
    CountingEnv, SyntheticOracleEnv, TabularMDP, make_tasks, normalized_levenshtein, oracle_for, perturb_mdp,
    policy_value, random_mdp, token_f1, value_iteration,
)
from tapplan.envs.collect import collect_transitions
from tapplan.envs.synthetic import REORDER_FAMILY, TaskFamily
from tapplan.envs.tabular import max_l1_distance
from tapplan.errors import DomainError


# -- similarity / oracle -----------------------------------------------------------

def test_token_f1_hand_values():
    assert token_f1(["a", "b"], ["a", "c"]) == 0.5
    assert token_f1(["a", "a", "b"], ["a", "b"]) == pytest.approx(2 * (2 / 3) * 1 / (2 / 3 + 1))
    assert token_f1([], []) == 1.0 and token_f1(["a"], []) == 0.0


def test_levenshtein_hand_values():
    assert normalized_levenshtein(list("kitten"), list("sitting")) == pytest.approx(1 - 3 / 7)
    assert normalized_levenshtein([], []) == 1.0
    assert normalized_levenshtein(["a", "b"], ["b", "a"]) == 0.0


def test_oracle_env_values():
    target = ReasoningChain.of([["a", "c"]])
    task = TaskInput("t", "x")
    env = SyntheticOracleEnv({"t": target})
    assert env.evaluate(task, target) == 1.0
    assert env.evaluate(task, ReasoningChain.of([["x", "y"]])) == 0.0
    assert env.evaluate(task, ReasoningChain.of([["a", "b"]])) == 0.5
    with pytest.raises(KeyError):
        env.evaluate(TaskInput("u", "x"), target)
    noisy = SyntheticOracleEnv({"t": target}, noise=0.3, seed=1)
    vals = [noisy.evaluate(task, ReasoningChain.of([["a", "b"]])) for _ in range(200)]
    assert min(vals) >= 0.0 and max(vals) <= 1.0 and len(set(vals)) > 1 and not noisy.deterministic


def test_make_tasks_is_seeded_and_reorder_family_only_reorders():
    a, b = make_tasks(5, 3), make_tasks(5, 3)
    assert a == b and make_tasks(5, 4) != a
    for t in make_tasks(20, 0, REORDER_FAMILY):
        assert len(t.start) == len(t.target) and t.start.n_tokens == t.target.n_tokens
        assert sorted(map(len, t.start.steps)) == sorted(map(len, t.target.steps))


def test_counting_env():
    tasks = make_tasks(2, 0)
    env = CountingEnv(oracle_for(tasks))
    for t in tasks:
        env.evaluate(t.task, t.start)
    assert env.queries == 2


# -- collection --------------------------------------------------------------------

def test_collect_structure_and_determinism():
    tasks = make_tasks(3, 0)
    env = oracle_for(tasks)
    ts = collect_transitions(env, [t.task for t in tasks], episodes=1, steps_per_episode=3, seed=5, vocab=TaskFamily().vocab)
    assert len(ts) == 3
    assert all(ts[i].next_chain == ts[i + 1].state.chain for i in range(2))
    again = collect_transitions(env, [t.task for t in tasks], episodes=1, steps_per_episode=3, seed=5, vocab=TaskFamily().vocab)
    assert ts == again


def test_random_edit_sweep_respects_invariants():
    tasks = make_tasks(5, 1)
    env = oracle_for(tasks)
    ts = collect_transitions(env, [t.task for t in tasks], episodes=50, steps_per_episode=10, seed=2, vocab=TaskFamily().vocab)
    assert len(ts) == 500
    prev = None
    for t in ts:
        assert 0.0 <= t.reward <= 1.0
        chained = prev is not None and prev.meta["episode"] == t.meta["episode"]
        assert check_transition(t, prev.reward if chained else None) == []
        assert env.evaluate(t.state.task, t.next_chain) == t.reward
        prev = t


def test_collect_rejects_bad_arguments():
    tasks = make_tasks(1, 0)
    env = oracle_for(tasks)
    with pytest.raises(ValueError):
        collect_transitions(env, [], vocab=["a"])
    with pytest.raises(ValueError):
        collect_transitions(env, [tasks[0].task], policy="planner", vocab=["a"])


# -- tabular -----------------------------------------------------------------------

def test_value_iteration_single_state():
    mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.5)
    assert value_iteration(mdp).values[0] == pytest.approx(2.0, abs=1e-9)
    zero = TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.9)
    assert value_iteration(zero).values[0] == 0.0


def test_value_iteration_two_state_chain():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    R = np.array([[0.0], [1.0]])
    V = value_iteration(TabularMDP(P, R, 0.5)).values
    assert V == pytest.approx([1.0, 2.0], abs=1e-9)


def test_policy_value_matches_linear_solve():
    P = np.array([
        [[0.5, 0.5, 0.0]],
        [[0.0, 0.2, 0.8]],
        [[0.3, 0.0, 0.7]],
    ])
    R = np.array([[0.1], [0.6], [1.0]])
    gamma = 0.8
    V = policy_value(TabularMDP(P, R, gamma), np.zeros(3, dtype=int))
    exact = np.linalg.solve(np.eye(3) - gamma * P[:, 0, :], R[:, 0])
    assert V == pytest.approx(exact, abs=1e-10)


def test_policy_value_consistency_and_symmetry():
    rng = np.random.default_rng(0)
    mdp = random_mdp(5, 3, 0.9, rng)
    vi = value_iteration(mdp, tol=1e-12)
    assert policy_value(mdp, vi.policy) == pytest.approx(vi.values, abs=1e-9)
    P = np.array([[[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]])
    R = np.array([[0.3, 0.7], [0.7, 0.3]])
    V = policy_value(TabularMDP(P, R, 0.9), np.full((2, 2), 0.5))
    assert V[0] == pytest.approx(V[1], abs=1e-12)


def test_perturbation_stays_within_delta():
    rng = np.random.default_rng(1)
    mdp = random_mdp(4, 2, 0.9, rng)
    assert perturb_mdp(mdp, 0.0, rng) is mdp
    for _ in range(100):
        delta = float(rng.uniform(0, 0.5))
        q = perturb_mdp(mdp, delta, rng)
        assert max_l1_distance(mdp, q) <= delta + 1e-12
        assert np.all(q.P >= 0) and np.allclose(q.P.sum(axis=2), 1.0)
        assert np.array_equal(q.R, mdp.R)


def test_tabular_validation_and_round_trip(tmp_path):
    with pytest.raises(DomainError):
        TabularMDP(np.full((1, 1, 1), 0.5), np.zeros((1, 1)), 0.5)
    with pytest.raises(DomainError):
        TabularMDP(np.ones((1, 1, 1)), np.full((1, 1), 2.0), 0.5)
    with pytest.raises(DomainError):
        TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0)
    mdp = random_mdp(3, 2, 0.5, np.random.default_rng(2))
    mdp.save(tmp_path / "m.json")
    back = TabularMDP.load(tmp_path / "m.json")
    assert np.array_equal(back.P, mdp.P) and np.array_equal(back.R, mdp.R)
