import random

import numpy as np
import pytest

from bmas.agents import (
    PREDEFINED_NAMES,
    Conflict,
    NoConflict,
    NotEnough,
    RemoveMessages,
    Role,
    SolutionFound,
    act,
    build_group,
    generate_experts,
    parse_cleaner,
    parse_conflict,
    parse_decider,
    parse_experts,
)
from bmas.backends import ModelPool, ScriptedBackend
from bmas.blackboard import Blackboard, MessageKind
from bmas.prompts import PromptTemplates
from bmas.trace import CycleTrace

POOL = ModelPool.of("llama", "qwen")
THREE = "Arithmetic teacher | knows sums\nNumber theorist | studies integers\nAccountant | adds columns"


def make_experts(reply=THREE, n=3, seed=7, extra=()):
    backend = ScriptedBackend([{"agent": "agent-generator", "reply": reply}, *extra])
    trace = CycleTrace()
    rng = random.Random(seed)
    experts = generate_experts("What is 2+2?", n, backend, POOL, rng, trace=trace)
    return experts, rng, trace, backend


def test_generates_three_experts():
    experts, _, _, _ = make_experts()
    assert [e.identity for e in experts] == ["Arithmetic teacher", "Number theorist", "Accountant"]
    assert [e.name for e in experts] == ["expert1", "expert2", "expert3"]
    assert all(e.role is Role.EXPERT for e in experts)


def test_generation_prompt_shape():
    _, _, trace, _ = make_experts()
    call = trace.calls(purpose="generate")[0]
    assert "propose 3 different experts" in call["system"]
    assert call["user"] == "What is 2+2?"


def test_extra_experts_dropped():
    reply = THREE + "\nChemist | bonds\nPoet | rhymes"
    experts, _, _, _ = make_experts(reply)
    assert len(experts) == 3


def test_short_generation_retries_then_fills():
    experts, _, trace, _ = make_experts(
        "Teacher | sums", extra=[{"agent": "agent-generator", "reply": "Teacher | again"}]
    )
    assert [e.identity for e in experts] == ["Teacher", "domain expert 1", "domain expert 2"]
    assert len(trace.calls(purpose="generate")) == 2
    assert trace.of_type("warning")


def test_model_draws_follow_seeded_stream():
    experts, rng, _, _ = make_experts(seed=7)
    group = build_group("What is 2+2?", experts, PromptTemplates(), POOL, rng)
    expected = [POOL.model_ids[int(u * 2)] for u in np.random.RandomState([7]).random_sample(8)]
    drawn = [a.model_id for a in group.experts] + [a.model_id for a in group.predefined]
    assert drawn == expected


def test_group_roster_order_and_prompts():
    experts, rng, _, _ = make_experts()
    group = build_group("What is 2+2?", experts, PromptTemplates(), POOL, rng)
    assert group.names == list(PREDEFINED_NAMES) + ["expert1", "expert2", "expert3"]
    assert group["expert2"].system_prompt.startswith("You are Number theorist. studies integers")
    assert "FINAL ANSWER" in group["decider"].system_prompt
    assert "REMOVE:" in group["cleaner"].system_prompt
    assert "What is 2+2?" in group["planner"].system_prompt


def test_build_group_requires_experts():
    with pytest.raises(ValueError):
        build_group("q", [], PromptTemplates(), POOL, random.Random(0))


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("FINAL ANSWER: \\boxed{4}", SolutionFound("\\boxed{4}")),
        ("Reasoning...\nfinal answer:  \\boxed{B}", SolutionFound("\\boxed{B}")),
        ("NOT ENOUGH, we need a check", NotEnough()),
        ("FINAL ANSWER:   ", NotEnough()),
        ("I think 4", NotEnough()),
    ],
)
def test_parse_decider(reply, expected):
    assert parse_decider(reply) == expected


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("REMOVE: #4, #7", RemoveMessages((4, 7))),
        ("These repeat.\nremove: 3 5", RemoveMessages((3, 5))),
        ("REMOVE: none", RemoveMessages(())),
        ("nothing to do", None),
    ],
)
def test_parse_cleaner(reply, expected):
    assert parse_cleaner(reply) == expected


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("CONFLICT: expert1, expert2", Conflict(("expert1", "expert2"))),
        ("Conflict: Expert1 and expert3.", Conflict(("expert1", "expert3"))),
        ("NO CONFLICT", NoConflict()),
        ("all good", None),
    ],
)
def test_parse_conflict(reply, expected):
    assert parse_conflict(reply) == expected


def test_parse_experts_strips_bullets_and_dupes():
    reply = "1. Chemist | bonds\n- chemist | again\n* Physicist | forces\nno pipe here"
    assert parse_experts(reply) == [("Chemist", "bonds"), ("Physicist", "forces")]


def _group_and_board():
    experts, rng, _, _ = make_experts()
    group = build_group("What is 2+2?", experts, PromptTemplates(), POOL, rng)
    board = Blackboard("What is 2+2?", group.names)
    return group, board


def test_act_sees_board_and_does_not_post():
    group, board = _group_and_board()
    board.post("planner", 1, MessageKind.PLAN, "Step 1: add.")
    backend = ScriptedBackend([{"agent": "decider", "reply": "FINAL ANSWER: \\boxed{4}"}])
    trace = CycleTrace()
    action = act(group["decider"], board, backend, trace=trace)
    assert action.kind is MessageKind.SOLUTION and action.directive == SolutionFound("\\boxed{4}")
    assert "Step 1: add." in trace.calls("decider")[0]["user"]
    assert len(board) == 2


def test_decider_not_enough_posts_as_system():
    group, board = _group_and_board()
    backend = ScriptedBackend([{"agent": "decider", "reply": "NOT ENOUGH"}])
    assert act(group["decider"], board, backend).kind is MessageKind.SYSTEM


def test_cleaner_without_directive_warns():
    group, board = _group_and_board()
    backend = ScriptedBackend([{"agent": "cleaner", "reply": "all fine"}])
    action = act(group["cleaner"], board, backend)
    assert action.directive is None and action.warnings
