import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TOKENS, chains, random_chain
from tapplan.chain import (
    AddExample, EMPTY_CHAIN, EnumConfig, FormatChange, InstructionEdit, NoOp, ReasoningChain, ScaleWeights,
    StepMerge, StepReorder, StepSplit, TOKEN_ONLY, TokenAdd, TokenDelete, TokenReplace, Transition, MDPState,
    TaskInput, action_from_dict, action_to_dict, apply_edit, check_transition, count_actions, enumerate_actions,
    parse_chain, render_chain, sample_action, sample_candidates,
)
from tapplan.errors import BoundsError, CapacityError, DegenerateSplitError, DomainError

NO_STRUCT = EnumConfig(templates=())


def C(*steps):
    return ReasoningChain.of(steps)


# -- text form ---------------------------------------------------------------

def test_parse_examples():
    c = parse_chain("Add 3 and 4.\nTotal is 7.", "\n")
    assert c.to_lists() == [["Add", "3", "and", "4."], ["Total", "is", "7."]]
    assert parse_chain("", "\n") == EMPTY_CHAIN
    assert len(parse_chain("a\n\nb", "\n")) == 2


def test_render_examples():
    assert render_chain(C(["a", "b"], ["c"]), "\n") == "a b\nc"
    assert render_chain(EMPTY_CHAIN) == ""
    with pytest.raises(DomainError):
        render_chain(C(["a|b"]), "|")


def test_parse_render_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = random_chain(rng)
        assert parse_chain(render_chain(c)) == c


def test_parse_normalizes_whitespace():
    assert render_chain(parse_chain("  a   b \n c\t d ")) == "a b\nc d"


def test_chain_rejects_bad_tokens():
    with pytest.raises(ValueError):
        ReasoningChain.of([["a b"]])
    with pytest.raises(ValueError):
        ReasoningChain.of([[]])


# -- apply_edit --------------------------------------------------------------

def test_apply_examples():
    assert apply_edit(C(["a", "b", "b", "c"]), TokenDelete(0, 2)) == C(["a", "b", "c"])
    assert apply_edit(C(["A"], ["B"], ["C"]), StepReorder(2, 0)) == C(["C"], ["A"], ["B"])
    c = C(["x", "y"], ["z"])
    assert apply_edit(c, NoOp()) is c
    with pytest.raises(BoundsError) as err:
        apply_edit(C(["a"]), TokenDelete(0, 5))
    assert err.value.index == 5 and err.value.limit == 1 and err.value.op == "delete"


def test_apply_each_kind():
    c = C(["a", "b"], ["c"])
    assert apply_edit(c, TokenAdd(1, 1, "d")) == C(["a", "b"], ["c", "d"])
    assert apply_edit(c, TokenReplace(0, 0, "z")) == C(["z", "b"], ["c"])
    assert apply_edit(c, StepSplit(0, 1)) == C(["a"], ["b"], ["c"])
    assert apply_edit(c, StepMerge(0)) == C(["a", "b", "c"])
    assert apply_edit(c, AddExample(C(["e", "g"]), 1)) == C(["a", "b"], ["e", "g"], ["c"])
    assert apply_edit(c, InstructionEdit(1, ("think",))) == C(["a", "b"], ["think"])
    assert apply_edit(c, FormatChange("numbered")) == C(["Step", "1:", "a", "b"], ["Step", "2:", "c"])
    assert apply_edit(c, FormatChange("bullet")) == C(["-", "a", "b"], ["-", "c"])
    assert apply_edit(c, FormatChange("identity")) == c


def test_apply_errors():
    c = C(["a", "b"], ["c"])
    with pytest.raises(DegenerateSplitError):
        apply_edit(c, StepSplit(0, 0))
    with pytest.raises(DegenerateSplitError):
        apply_edit(c, StepSplit(0, 2))
    with pytest.raises(BoundsError):
        apply_edit(c, StepMerge(1))
    with pytest.raises(BoundsError):
        apply_edit(c, StepReorder(0, 2))
    with pytest.raises(DomainError):
        apply_edit(c, FormatChange("fancy"))


def test_delete_last_token_drops_step_and_add_on_empty():
    assert apply_edit(C(["a"], ["b"]), TokenDelete(0, 0)) == C(["b"])
    assert apply_edit(EMPTY_CHAIN, TokenAdd(0, 0, "a")) == C(["a"])
    with pytest.raises(BoundsError):
        apply_edit(EMPTY_CHAIN, TokenAdd(1, 0, "a"))


def test_templates_idempotent_and_convertible():
    c = C(["a", "b"], ["c"])
    for name in ("numbered", "bullet", "plain"):
        once = apply_edit(c, FormatChange(name))
        assert apply_edit(once, FormatChange(name)) == once
    numbered = apply_edit(c, FormatChange("numbered"))
    assert apply_edit(numbered, FormatChange("plain")) == c
    assert apply_edit(numbered, FormatChange("bullet")) == C(["-", "a", "b"], ["-", "c"])


@settings(max_examples=200, deadline=None)
@given(chains(min_steps=1), st.data())
def test_inverse_pairs(c, data):
    s = data.draw(st.integers(0, len(c) - 1))
    p = data.draw(st.integers(0, len(c.steps[s])))
    tok = data.draw(st.sampled_from(TOKENS))
    assert apply_edit(apply_edit(c, TokenAdd(s, p, tok)), TokenDelete(s, p)) == c
    i = data.draw(st.integers(0, len(c) - 1))
    j = data.draw(st.integers(0, len(c) - 1))
    assert apply_edit(apply_edit(c, StepReorder(i, j)), StepReorder(j, i)) == c
    if len(c.steps[s]) > 1:
        q = data.draw(st.integers(1, len(c.steps[s]) - 1))
        assert apply_edit(apply_edit(c, StepSplit(s, q)), StepMerge(s)) == c


@settings(max_examples=200, deadline=None)
@given(chains(), st.integers(0, 2**32 - 1))
def test_purity_and_token_counts(c, seed):
    before = c.to_lists()
    rng = np.random.default_rng(seed)
    a = sample_action(c, TOKENS, ScaleWeights(), rng, EnumConfig(templates=("identity",)))
    out = apply_edit(c, a)
    assert c.to_lists() == before
    if isinstance(a, TokenDelete):
        assert out.n_tokens == c.n_tokens - 1
    if isinstance(a, TokenAdd):
        assert out.n_tokens == c.n_tokens + 1
    if isinstance(a, (StepReorder, StepSplit, StepMerge, FormatChange)):
        assert sorted(out.tokens()) == sorted(c.tokens())


# -- enumeration / sampling ----------------------------------------------------

def test_enumeration_hand_count():
    acts = enumerate_actions(C(["a"]), ["a", "b"], NO_STRUCT)
    kinds = [a.op for a in acts]
    assert kinds.count("noop") == 1
    assert kinds.count("add") == 4 and kinds.count("delete") == 1 and kinds.count("replace") == 2
    assert kinds.count("reorder") == kinds.count("split") == kinds.count("merge") == 0
    assert len(acts) == 8
    with_templates = enumerate_actions(C(["a"]), ["a", "b"])
    assert len(with_templates) == 8 + 4


def test_enumeration_empty_chain():
    acts = enumerate_actions(EMPTY_CHAIN, ["a"], NO_STRUCT)
    assert acts == [NoOp(), TokenAdd(0, 0, "a")]


def _independent_count(c, V, n_frag, n_instr, n_tmpl):
    lens = [len(s) for s in c.steps]
    n = len(lens)
    add = V if n == 0 else sum(l + 1 for l in lens) * V
    token = add + sum(lens) + sum(lens) * V
    step = n * (n - 1) + sum(l - 1 for l in lens) + max(n - 1, 0)
    structure = (n + 1) * n_frag + n * n_instr + n_tmpl
    return 1 + token + step + structure


@settings(max_examples=100, deadline=None)
@given(chains())
def test_enumeration_matches_closed_form_and_applies(c):
    cfg = EnumConfig(fragments=(C(["e"]),), instructions=(("think",), ("check", "it")))
    acts = enumerate_actions(c, TOKENS, cfg)
    assert len(acts) == count_actions(c, TOKENS, cfg) == _independent_count(c, len(TOKENS), 1, 2, 4)
    assert acts == enumerate_actions(c, TOKENS, cfg)
    for a in acts:
        apply_edit(c, a)


def test_enumeration_capacity():
    with pytest.raises(CapacityError):
        enumerate_actions(C(["a"] * 10), TOKENS, EnumConfig(max_enumeration=10))


def test_sample_candidates_contract():
    c = C(["a", "b"], ["c", "d", "e"], ["a"])
    assert sample_candidates(c, 1, TOKENS) == [NoOp()]
    x = sample_candidates(c, 10, TOKENS, ScaleWeights(), np.random.default_rng(7))
    y = sample_candidates(c, 10, TOKENS, ScaleWeights(), np.random.default_rng(7))
    assert x == y and len(x) == 10 and x[0] == NoOp()
    for a in x:
        apply_edit(c, a)
    with pytest.raises(DomainError):
        sample_candidates(c, 0, TOKENS)


def test_token_only_sampler_never_leaves_token_scale():
    rng = np.random.default_rng(1)
    c = C(["a", "b"], ["c"])
    assert {sample_action(c, TOKENS, TOKEN_ONLY, rng).scale for _ in range(300)} == {"token"}


def test_sampler_scale_frequencies():
    rng = np.random.default_rng(3)
    c = C(["a", "b"], ["c", "d"], ["e"])
    scales = [sample_action(c, TOKENS, ScaleWeights(), rng).scale for _ in range(6000)]
    freq = {s: scales.count(s) / len(scales) for s in ("token", "step", "structure")}
    assert abs(freq["token"] - 0.5) < 0.03 and abs(freq["step"] - 0.3) < 0.03 and abs(freq["structure"] - 0.2) < 0.03


def test_sampler_skips_empty_scales():
    # a single one-token step has no step-scale action; structure has only templates
    rng = np.random.default_rng(0)
    c = C(["a"])
    for _ in range(200):
        a = sample_action(c, TOKENS, ScaleWeights(0.0, 1.0, 0.0), rng, NO_STRUCT)
        assert isinstance(a, NoOp)


# -- serialization / transitions ------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(chains(min_steps=1), st.integers(0, 2**32 - 1))
def test_action_dict_round_trip(c, seed):
    cfg = EnumConfig(fragments=(C(["e"], ["d"]),), instructions=(("think",),))
    for a in sample_candidates(c, 8, TOKENS, ScaleWeights(), np.random.default_rng(seed), cfg):
        assert action_from_dict(action_to_dict(a)) == a


def test_action_from_dict_rejects_wrong_scale():
    with pytest.raises(ValueError):
        action_from_dict({"scale": "step", "op": "add", "step": 0, "pos": 0, "token": "a"})
    with pytest.raises(ValueError):
        action_from_dict({"op": "teleport"})


def test_check_transition():
    task = TaskInput("t", "x y")
    c = C(["a", "b"])
    good = Transition(MDPState(task, c), TokenDelete(0, 0), C(["b"]), 0.5, 0.1)
    assert check_transition(good, 0.4) == []
    bad = Transition(MDPState(task, c), TokenDelete(0, 0), C(["a"]), 1.5, 0.3)
    problems = check_transition(bad, 0.4)
    assert len(problems) == 3
