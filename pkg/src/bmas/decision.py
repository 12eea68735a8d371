"""Fallback decision rule: cumulative-similarity vote over candidate answers.

Each candidate scores ``V(a_i) = sum_{j != i} sim(a_i, a_j)`` and the
highest score wins, ties going to the earliest candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Union

from bmas.agents import AgentGroup, AgentSpec, Role
from bmas.answers import AnswerFormat, extract_answer
from bmas.backends import DEFAULT_TEMPERATURE, CompletionRequest, ModelBackend
from bmas.blackboard import Blackboard, MessageKind, Redaction
from bmas.errors import BackendError, NoCandidates
from bmas.prompts import PromptTemplates, render
from bmas.trace import CycleTrace


class SimMetric(str, Enum):
    EXACT = "exact"
    JACCARD = "jaccard"


# custom metrics may return float or Fraction; a Fraction keeps ties exact
Metric = Union[SimMetric, Callable[[str, str], float]]


@dataclass(frozen=True)
class CandidateAnswer:
    agent: str
    raw: str
    answer: str


@dataclass(frozen=True)
class VoteResult:
    candidates: tuple[CandidateAnswer, ...]
    scores: tuple[float, ...]
    winner_index: int
    metric: str

    @property
    def winner(self) -> CandidateAnswer:
        return self.candidates[self.winner_index]

    @property
    def by_agent(self) -> dict[str, float]:
        return {c.agent: s for c, s in zip(self.candidates, self.scores)}

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "winner": self.winner.answer,
            "winner_agent": self.winner.agent,
            "scores": [
                {"agent": c.agent, "answer": c.answer, "score": s}
                for c, s in zip(self.candidates, self.scores)
            ],
        }


def _jaccard_exact(a: str, b: str) -> Fraction:
    ta, tb = set(a.split()), set(b.split())
    if not ta and not tb:
        return Fraction(1)
    return Fraction(len(ta & tb), len(ta | tb))


def jaccard(a: str, b: str) -> float:
    return float(_jaccard_exact(a, b))


def _similarity_exact(a: str, b: str, metric: Metric) -> Fraction:
    if callable(metric):
        return Fraction(metric(a, b))
    if SimMetric(metric) is SimMetric.EXACT:
        return Fraction(int(a == b))
    return _jaccard_exact(a, b)


def similarity(a: str, b: str, metric: Metric = SimMetric.EXACT) -> float:
    return float(_similarity_exact(a, b, metric))


def _metric_id(metric: Metric) -> str:
    if callable(metric):
        return getattr(metric, "__name__", "custom")
    return SimMetric(metric).value


def vote(candidates: Iterable[CandidateAnswer], metric: Metric = SimMetric.EXACT) -> VoteResult:
    cands = tuple(candidates)
    if not cands:
        raise NoCandidates("vote needs at least one candidate")
    n = len(cands)
    # exact rational sums, so candidates that tie really tie and the
    # lowest-index rule decides rather than float rounding order
    sim = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            sim[i][j] = sim[j][i] = _similarity_exact(cands[i].answer, cands[j].answer, metric)
    exact = [sum(sim[i][j] for j in range(n) if j != i) for i in range(n)]
    best = 0
    for i in range(1, n):
        if exact[i] > exact[best]:
            best = i
    return VoteResult(cands, tuple(float(x) for x in exact), best, _metric_id(metric))


def consensus_fraction(candidates: Iterable[CandidateAnswer], metric: Metric = SimMetric.EXACT) -> float:
    """Share of candidates whose answer equals the vote winner's exactly."""
    result = vote(candidates, metric)
    return sum(c.answer == result.winner.answer for c in result.candidates) / len(result.candidates)


def voters(group: AgentGroup, include_utility: bool = False) -> list[AgentSpec]:
    """Agents asked for a candidate answer, in roster order.

    The cleaner and conflict-resolver produce no answers by role and are
    left out unless ``include_utility`` is set.
    """
    skip = set() if include_utility else {Role.CLEANER, Role.CONFLICT_RESOLVER}
    return [a for a in group.agents if a.role not in skip]


def collect_candidates(
    group: AgentGroup,
    board: Blackboard,
    backend: ModelBackend,
    templates: PromptTemplates | None = None,
    *,
    fmt: AnswerFormat = AnswerFormat(),
    round: int = 1,
    redaction: Redaction = Redaction.EXCLUDE_REMOVED,
    include_utility: bool = False,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[CandidateAnswer]:
    """Ask every voting agent for a final answer and post each one.

    All agents answer from the same board state; the answers are posted in
    roster order afterwards. A backend failure for one agent drops only that
    candidate.
    """
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()
    out = []
    for agent in voters(group, include_utility):
        user = render(
            templates.answer_template, blackboard=board.render_view(agent.name, redaction), name=agent.name
        )
        req = CompletionRequest(agent.model_id, agent.system_prompt, user, temperature, caller=agent.name, round=round)
        try:
            reply = trace.call(backend, req, "answer").text
        except BackendError as exc:
            trace.warn(round, f"no candidate answer: {exc}", agent=agent.name)
            continue
        out.append(CandidateAnswer(agent.name, reply, extract_answer(reply, fmt)))
    if not out:
        raise NoCandidates("every agent failed to give a candidate answer")
    # posted only after every agent answered, so no answer sees another
    for cand in out:
        trace.record_post(board, board.post(cand.agent, round, MessageKind.CANDIDATE_ANSWER, cand.raw))
    return out

