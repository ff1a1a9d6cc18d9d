import numpy as np
import pytest
from hypothesis import strategies as st

from tapplan.chain import ReasoningChain, TaskInput

TOKENS = ["a", "b", "c", "d", "e"]


def chains(max_steps: int = 4, max_len: int = 4, min_steps: int = 0):
    step = st.lists(st.sampled_from(TOKENS), min_size=1, max_size=max_len).map(tuple)
    return st.lists(step, min_size=min_steps, max_size=max_steps).map(lambda s: ReasoningChain(tuple(s)))


def random_chain(rng: np.random.Generator, max_steps: int = 4, max_len: int = 5, vocab=TOKENS) -> ReasoningChain:
    n = int(rng.integers(1, max_steps + 1))
    return ReasoningChain.of(
        [[vocab[int(i)] for i in rng.integers(0, len(vocab), int(rng.integers(1, max_len + 1)))] for _ in range(n)]
    )


@pytest.fixture
def task():
    return TaskInput("t0", "solve a b c", initial_chain=ReasoningChain.of([["a", "x"], ["b"]]))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
