"""The blackboard cycle.

Per query: post the query, generate experts, then for up to ``max_rounds``
rounds let the control unit pick agents and run them one after another,
each seeing everything posted before it. A decider solution ends the cycle
at once; otherwise every voting agent answers and the cumulative-similarity
vote decides.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from bmas.agents import (
    AgentGroup,
    AgentSpec,
    Conflict,
    RemoveMessages,
    SolutionFound,
    act,
    build_group,
    directive_record,
    generate_experts,
)
from bmas.answers import AnswerFormat, extract_answer
from bmas.backends import DEFAULT_TEMPERATURE, CompletionRequest, ModelBackend, ModelPool
from bmas.blackboard import Blackboard, MessageKind, Redaction
from bmas.control import autonomous_poll, select_agents, selection_request
from bmas.decision import SimMetric, VoteResult, collect_candidates, consensus_fraction, vote
from bmas.errors import BackendError, BackendFailure, NoCandidates
from bmas.prompts import PromptTemplates, render
from bmas.trace import CycleTrace


class ControlMode(str, Enum):
    CONTROL_UNIT = "ControlUnit"
    AUTONOMOUS_POLL = "AutonomousPoll"


class Outcome(str, Enum):
    DECIDER = "DeciderSolution"
    VOTE = "VoteSolution"
    EXHAUSTED = "Exhausted"


@dataclass(frozen=True)
class CycleConfig:
    max_rounds: int = 4
    expert_count: int = 3
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    redaction: Redaction = Redaction.EXCLUDE_REMOVED
    control_mode: ControlMode = ControlMode.CONTROL_UNIT
    debate_turns: int = 2
    sim_metric: SimMetric = SimMetric.EXACT
    measure_consensus: bool = False
    vote_includes_utility_agents: bool = False

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.expert_count < 1:
            raise ValueError("expert_count must be >= 1")
        if self.debate_turns < 1:
            raise ValueError("debate_turns must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        # accept plain strings from config files
        object.__setattr__(self, "redaction", Redaction(self.redaction))
        object.__setattr__(self, "control_mode", ControlMode(self.control_mode))
        object.__setattr__(self, "sim_metric", SimMetric(self.sim_metric))

    def to_dict(self) -> dict:
        return {
            "max_rounds": self.max_rounds,
            "expert_count": self.expert_count,
            "temperature": self.temperature,
            "seed": self.seed,
            "redaction": self.redaction.value,
            "control_mode": self.control_mode.value,
            "debate_turns": self.debate_turns,
            "sim_metric": self.sim_metric.value,
            "measure_consensus": self.measure_consensus,
            "vote_includes_utility_agents": self.vote_includes_utility_agents,
        }


@dataclass
class Solution:
    answer: str | None
    raw: str
    outcome: Outcome
    rounds_executed: int
    vote: VoteResult | None = None
    consensus: float | None = None
    group: AgentGroup | None = field(default=None, repr=False)


def run_debate(
    session: str,
    participants: list[AgentSpec],
    board: Blackboard,
    backend: ModelBackend,
    turns: int = 2,
    templates: PromptTemplates | None = None,
    *,
    round: int = 1,
    redaction: Redaction = Redaction.EXCLUDE_REMOVED,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[int]:
    """Private discussion followed by one public summary per participant.

    Returns the ids of the public summaries.
    """
    if len(participants) < 2:
        raise ValueError("a debate needs at least two participants")
    if session not in board.private_sessions:
        raise ValueError(f"session {session} is not open")
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()

    def say(agent: AgentSpec, template: str, purpose: str, **extra) -> str:
        user = render(
            template,
            blackboard=board.render_view(agent.name, redaction),
            name=agent.name,
            session=session,
            **extra,
        )
        req = CompletionRequest(agent.model_id, agent.system_prompt, user, temperature, caller=agent.name, round=round)
        return trace.call(backend, req, purpose).text

    for turn in range(1, turns + 1):
        for agent in participants:
            others = ", ".join(p.name for p in participants if p is not agent)
            text = say(agent, templates.debate_template, "debate", others=others, turn=turn, turns=turns)
            trace.record_post(board, board.post(agent.name, round, MessageKind.DEBATE_TURN, text, session))
    summary_ids = []
    for agent in participants:
        text = say(agent, templates.summary_template, "summary")
        mid = board.post(agent.name, round, MessageKind.SUMMARY, text)
        trace.record_post(board, mid)
        summary_ids.append(mid)
    return summary_ids


class _Cycle:
    """State of one run; ``run_cycle`` is the public entry point."""

    def __init__(self, query, config, templates, pool, backend, fmt) -> None:
        self.query = query
        self.config: CycleConfig = config
        self.templates: PromptTemplates = templates
        self.pool: ModelPool = pool
        self.backend: ModelBackend = backend
        self.fmt: AnswerFormat = fmt
        self.rng = random.Random(config.seed)
        self.board = Blackboard(query)
        self.trace = CycleTrace(header={"query": query, "config": config.to_dict(), "format": fmt.to_dict()})
        self.group: AgentGroup | None = None
        self.rounds = 0
        self.round_starts: list[int] = []

    # -- directives -----------------------------------------------------------

    def _remove(self, t: int, d: RemoveMessages) -> None:
        known = [i for i in d.ids if 0 <= i < len(self.board)]
        unknown = [i for i in d.ids if i not in known]
        if unknown:
            self.trace.warn(t, "cleaner named unknown message ids", ids=unknown, agent="cleaner")
        removed = self.board.remove(known, "cleaner")
        skipped = [i for i in known if i not in removed]
        self.trace.emit("removal", round=t, requested=list(d.ids), removed=removed, skipped=skipped)

    def _conflict(self, t: int, resolver: str, d: Conflict) -> None:
        valid = [n for n in d.names if n in self.group and n != resolver]
        unknown = [n for n in d.names if n not in valid]
        if unknown:
            self.trace.warn(t, "conflict-resolver named unknown agents", names=unknown, agent=resolver)
        if len(valid) < 2:
            self.trace.warn(t, "fewer than two agents in conflict; no debate", agent=resolver)
            return
        session = self.board.open_private_session(valid)
        self.trace.emit("session_open", round=t, session=session, participants=valid)
        summaries = run_debate(
            session,
            [self.group[n] for n in valid],
            self.board,
            self.backend,
            self.config.debate_turns,
            self.templates,
            round=t,
            redaction=self.config.redaction,
            trace=self.trace,
            temperature=self.config.temperature,
        )
        self.trace.emit("session_close", round=t, session=session, summaries=summaries)

    # -- main loop ------------------------------------------------------------

    def _select(self, t: int) -> list[str]:
        cfg = self.config
        agents = list(self.group.agents)
        if cfg.control_mode is ControlMode.AUTONOMOUS_POLL:
            sel = autonomous_poll(
                agents,
                self.board,
                self.backend,
                self.templates,
                redaction=cfg.redaction,
                round=t,
                trace=self.trace,
                temperature=cfg.temperature,
            )
        else:
            sel = select_agents(
                selection_request(self.query, self.board, agents, cfg.redaction),
                self.backend,
                self.pool.utility_model,
                self.templates,
                round=t,
                trace=self.trace,
                temperature=cfg.temperature,
            )
        self.trace.emit(
            "selection",
            round=t,
            mode=cfg.control_mode.value,
            chosen=sel.chosen,
            fallback=sel.fallback,
            rationale=sel.rationale,
        )
        return sel.chosen

    def _round(self, t: int) -> str | None:
        """Run round ``t``; returns the decider's solution text if one was given."""
        cfg = self.config
        for name in self._select(t):
            action = act(
                self.group[name],
                self.board,
                self.backend,
                cfg.redaction,
                self.templates,
                round=t,
                trace=self.trace,
                temperature=cfg.temperature,
            )
            for w in action.warnings:
                self.trace.warn(t, w, agent=name)
            self.trace.record_post(self.board, self.board.post(name, t, action.kind, action.content))
            d = action.directive
            if d is not None:
                self.trace.emit("directive", round=t, agent=name, directive=directive_record(d))
            if isinstance(d, SolutionFound):
                return d.text
            if isinstance(d, RemoveMessages):
                self._remove(t, d)
            elif isinstance(d, Conflict):
                self._conflict(t, name, d)
        return None

    def _vote(self) -> tuple[VoteResult, float]:
        candidates = collect_candidates(
            self.group,
            self.board,
            self.backend,
            self.templates,
            fmt=self.fmt,
            round=max(self.rounds, 1),
            redaction=self.config.redaction,
            include_utility=self.config.vote_includes_utility_agents,
            trace=self.trace,
            temperature=self.config.temperature,
        )
        result = vote(candidates, self.config.sim_metric)
        return result, consensus_fraction(candidates, self.config.sim_metric)

    def run(self) -> Solution:
        cfg = self.config
        self.trace.record_post(self.board, 0)
        experts = generate_experts(
            self.query,
            cfg.expert_count,
            self.backend,
            self.pool,
            self.rng,
            self.templates,
            trace=self.trace,
            temperature=cfg.temperature,
        )
        self.group = build_group(self.query, experts, self.templates, self.pool, self.rng)
        self.board.register(self.group.names)
        self.trace.header["group"] = self.group.snapshot()

        decided = None
        for t in range(1, cfg.max_rounds + 1):
            self.rounds = t
            self.round_starts.append(len(self.trace.events))
            self.trace.emit("round_start", round=t)
            decided = self._round(t)
            if decided is not None:
                break

        if decided is not None:
            sol = Solution(extract_answer(decided, self.fmt), decided, Outcome.DECIDER, self.rounds)
            if cfg.measure_consensus:
                try:
                    sol.vote, sol.consensus = self._vote()
                    self.trace.emit("vote", round=self.rounds, binding=False, **sol.vote.to_dict())
                except NoCandidates:
                    self.trace.warn(self.rounds, "consensus measurement produced no candidates")
        else:
            try:
                result, consensus = self._vote()
            except NoCandidates:
                sol = Solution(None, "", Outcome.EXHAUSTED, self.rounds)
            else:
                self.trace.emit("vote", round=self.rounds, binding=True, **result.to_dict())
                sol = Solution(result.winner.answer, result.winner.raw, Outcome.VOTE, self.rounds, result, consensus)
        sol.group = self.group
        self._summarize(sol)
        return sol

    def _summarize(self, sol: Solution | None, error: str | None = None) -> None:
        usage = self.trace.usage
        self.trace.summary = {
            "outcome": sol.outcome.value if sol else None,
            "answer": sol.answer if sol else None,
            "solution_text": sol.raw if sol else None,
            "rounds_executed": self.rounds,
            "round_starts": self.round_starts,
            "consensus": sol.consensus if sol else None,
            "vote": sol.vote.to_dict() if sol and sol.vote else None,
            "usage": usage.snapshot(),
            "usage_by_agent": {k: list(v) for k, v in sorted(usage.by_agent().items())},
            "board": self.board.dump(),
            "error": error,
        }


def run_cycle(
    query: str,
    config: CycleConfig,
    templates: PromptTemplates,
    pool: ModelPool,
    backend: ModelBackend,
    fmt: AnswerFormat = AnswerFormat(),
) -> tuple[Solution, CycleTrace]:
    """Solve ``query`` on a fresh blackboard.

    A backend failure aborts the run with :class:`BackendFailure`; the
    partial trace is attached to the exception as ``trace``.
    """
    cycle = _Cycle(query, config, templates, pool, backend, fmt)
    try:
        sol = cycle.run()
    except BackendError as exc:
        cycle._summarize(None, error=f"{type(exc).__name__}: {exc}")
        failure = exc if isinstance(exc, BackendFailure) else BackendFailure(str(exc), cause=exc)
        failure.trace = cycle.trace
        if failure is exc:
            raise
        raise failure from exc
    return sol, cycle.trace
