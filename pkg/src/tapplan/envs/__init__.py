from tapplan.envs.base import CountingEnv, Environment, default_initial_chain
from tapplan.envs.similarity import normalized_levenshtein, token_f1
from tapplan.envs.synthetic import (
    REORDER_FAMILY, SyntheticOracleEnv, SyntheticTask, TaskFamily, make_tasks, oracle_for,
)
from tapplan.envs.tabular import (
    TabularMDP, perturb_mdp, policy_value, random_mdp, value_iteration,
)

__all__ = [
    "CountingEnv", "Environment", "default_initial_chain", "normalized_levenshtein", "token_f1",
    "REORDER_FAMILY", "SyntheticOracleEnv", "SyntheticTask", "TaskFamily", "make_tasks", "oracle_for",
    "TabularMDP", "perturb_mdp", "policy_value", "random_mdp", "value_iteration",
]
