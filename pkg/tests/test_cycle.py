import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmas import CycleConfig, Redaction
from bmas.blackboard import MessageKind
from bmas.cycle import ControlMode, Outcome
from bmas.errors import BackendFailure
from bmas.trace import CycleTrace
from scenarios import (
    ANSWER,
    PRIVATE_TURNS,
    SUITE,
    SUMMARIES,
    answers,
    cleaner,
    conflict,
    decide_at,
    e,
    early_stop,
    never_decide,
    run,
)


@pytest.mark.parametrize("name", sorted(SUITE))
def test_suite_consumes_whole_script(name):
    build, config = SUITE[name]
    _, _, backend = run(build(), **config)
    assert backend.remaining == 0


def test_early_stop():
    sol, trace, _ = run(early_stop())
    assert (sol.answer, sol.outcome, sol.rounds_executed) == ("4", Outcome.DECIDER, 1)
    assert trace.summary["outcome"] == "DeciderSolution" and trace.summary["rounds_executed"] == 1
    assert not trace.calls(purpose="answer")


def test_roster_has_eight_agents():
    sol, trace, _ = run(early_stop())
    assert len(sol.group) == 8
    assert [a["name"] for a in trace.header["group"]][-3:] == ["expert1", "expert2", "expert3"]


def test_never_decide_votes():
    sol, trace, _ = run(never_decide())
    assert (sol.outcome, sol.rounds_executed, sol.answer) == (Outcome.VOTE, 4, "4")
    assert sol.consensus == pytest.approx(4 / 6)
    vote = trace.of_type("vote")[0]
    assert vote["binding"] is True and vote["winner"] == "4"
    posted = [ev for ev in trace.of_type("post") if ev["kind"] == "CandidateAnswer"]
    assert [ev["author"] for ev in posted] == ["planner", "decider", "critic", "expert1", "expert2", "expert3"]
    assert [ev["id"] for ev in posted] == sorted(ev["id"] for ev in posted)


def test_vote_candidates_do_not_see_each_other():
    _, trace, _ = run(never_decide())
    for call in trace.calls(purpose="answer"):
        assert "\\boxed{5}" not in call["user"]


def test_exhausted_when_nobody_answers():
    script = never_decide()[:-6]
    sol, trace, _ = run(script)
    assert sol.outcome is Outcome.EXHAUSTED and sol.answer is None
    assert len(trace.of_type("warning")) >= 6


def test_measure_consensus_after_decider():
    script = early_stop() + answers({n: "\\boxed{4}" for n in ["planner", "decider", "critic", "expert1", "expert2"]})
    script += answers({"expert3": "\\boxed{3}"})
    sol, trace, _ = run(script, measure_consensus=True)
    assert sol.outcome is Outcome.DECIDER and sol.answer == "4"
    assert sol.consensus == pytest.approx(5 / 6)
    assert trace.of_type("vote")[0]["binding"] is False


def test_conflict_opens_private_debate():
    sol, trace, _ = run(conflict())
    assert sol.rounds_executed == 3 and sol.outcome is Outcome.DECIDER
    opened = trace.of_type("session_open")[0]
    assert opened["session"] == "ps-1" and opened["participants"] == ["expert1", "expert2"]
    private = [ev for ev in trace.of_type("post") if ev["kind"] == "DebateTurn"]
    assert [ev["content"] for ev in private] == [
        PRIVATE_TURNS[("expert1", 1)], PRIVATE_TURNS[("expert2", 1)],
        PRIVATE_TURNS[("expert1", 2)], PRIVATE_TURNS[("expert2", 2)],
    ]
    assert {ev["visibility"] for ev in private} == {"Private(ps-1)"}
    summaries = [ev for ev in trace.of_type("post") if ev["kind"] == "Summary"]
    assert [ev["content"] for ev in summaries] == [SUMMARIES["expert1"], SUMMARIES["expert2"]]
    assert trace.of_type("session_close")[0]["summaries"] == [ev["id"] for ev in summaries]


def test_conflict_with_one_name_skips_debate():
    script = conflict()
    i = next(k for k, x in enumerate(script) if x["reply"].startswith("CONFLICT"))
    script[i] = e("conflict-resolver", "CONFLICT: expert1, conflict-resolver")
    script = [x for x in script if not x["reply"].startswith(("PRIVATE", "SUMMARY"))]
    _, trace, backend = run(script)
    assert not trace.of_type("session_open")
    assert backend.remaining == 0


def test_cleaner_removal_event():
    _, trace, _ = run(cleaner())
    removal = trace.of_type("removal")[0]
    assert removal["removed"] == [4, 7] and removal["skipped"] == [0]
    board = {m["id"]: m for m in trace.summary["board"]}
    assert board[4]["state"] == "Removed" and board[7]["state"] == "Removed"
    assert board[0]["state"] == "Active"


def test_cleaner_unknown_id_warns():
    script = cleaner()
    i = next(k for k, x in enumerate(script) if x["reply"].startswith("REMOVE"))
    script[i] = e("cleaner", "REMOVE: #4, #99")
    _, trace, _ = run(script)
    assert trace.of_type("removal")[0]["removed"] == [4]
    assert any(w.get("ids") == [99] for w in trace.of_type("warning"))


def test_backend_failure_keeps_partial_trace():
    script = early_stop()[:-1]
    with pytest.raises(BackendFailure) as info:
        run(script)
    trace = info.value.trace
    assert trace.summary["outcome"] is None and "ScriptMismatch" in trace.summary["error"]
    assert trace.calls("expert1")


def test_single_round_budget():
    sol, _, _ = run(never_decide(k=1), max_rounds=1)
    assert sol.rounds_executed == 1 and sol.outcome is Outcome.VOTE


def test_trace_roundtrip():
    _, trace, _ = run(conflict())
    again = CycleTrace.from_jsonl(trace.to_jsonl())
    assert again.to_jsonl() == trace.to_jsonl()
    assert again.usage.snapshot() == trace.usage.snapshot()


def test_config_from_strings():
    cfg = CycleConfig(redaction="MarkRemoved", control_mode="AutonomousPoll", sim_metric="jaccard")
    assert cfg.redaction is Redaction.MARK_REMOVED and cfg.control_mode is ControlMode.AUTONOMOUS_POLL


@pytest.mark.parametrize("kw", [{"max_rounds": 0}, {"expert_count": 0}, {"temperature": 3.0}, {"debate_turns": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        CycleConfig(**kw)


def test_poll_mode_asks_every_agent_each_round():
    _, trace, _ = run(SUITE["poll"][0](), control_mode=ControlMode.AUTONOMOUS_POLL)
    assert len(trace.calls(purpose="poll")) == 8
    assert not trace.calls("control-unit")


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5))
def test_rounds_never_exceed_budget(decide_round, budget):
    sol, trace, _ = run(decide_at(decide_round), max_rounds=budget)
    assert sol.rounds_executed == min(decide_round, budget)
    assert len(trace.of_type("round_start")) == sol.rounds_executed
    if decide_round <= budget:
        assert sol.outcome is Outcome.DECIDER
    # every post's round is within the budget and never decreases
    rounds = [ev["round"] for ev in trace.of_type("post")]
    assert rounds == sorted(rounds) and max(rounds) <= budget


def test_vote_uses_answer_prompt():
    _, trace, _ = run(never_decide())
    assert all(ANSWER in c["user"] for c in trace.calls(purpose="answer"))
    assert all(ev["kind"] != MessageKind.SOLUTION.value for ev in trace.of_type("post"))
