"""Control unit: picks the agents that act in the next round."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from bmas.agents import AgentSpec, Role
from bmas.backends import DEFAULT_TEMPERATURE, CompletionRequest, ModelBackend
from bmas.blackboard import CONTROL_VIEWER, Blackboard, Redaction
from bmas.prompts import PromptTemplates, render
from bmas.trace import CycleTrace


@dataclass(frozen=True)
class SelectionRequest:
    query: str
    board_view: str
    roster: list[tuple[str, str]]
    # names of expert agents, in roster order (the fallback selection)
    experts: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        names = [n for n, _ in self.roster]
        if not names:
            raise ValueError("roster must not be empty")
        if len(set(names)) != len(names):
            raise ValueError(f"roster names must be unique: {names}")


@dataclass(frozen=True)
class Selection:
    chosen: list[str]
    rationale: str = ""
    dropped: list[str] = field(default_factory=list)
    fallback: bool = False


_STRIP_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])?\s*")


def parse_names(reply: str, roster: list[str]) -> tuple[list[str], list[str]]:
    """Split a delimited name list and match it against the roster.

    Returns ``(chosen, dropped)``: chosen names in first-mention order with
    roster spelling, and the unrecognised tokens.
    """
    lookup = {name.casefold(): name for name in roster}
    chosen: list[str] = []
    dropped: list[str] = []
    for token in re.split(r"[,;\n]", reply):
        token = _STRIP_RE.sub("", token).strip().strip(".'\"`*").strip()
        if not token:
            continue
        name = lookup.get(token.casefold())
        if name is None:
            dropped.append(token)
        elif name not in chosen:
            chosen.append(name)
    return chosen, dropped


def format_roster(roster: list[tuple[str, str]]) -> str:
    return "\n".join(f"- {name}: {description}" for name, description in roster)


def select_agents(
    req: SelectionRequest,
    backend: ModelBackend,
    model_id: str,
    templates: PromptTemplates | None = None,
    *,
    round: int = 1,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    max_attempts: int = 2,
) -> Selection:
    """Ask the control model for the next agents.

    Unknown names are dropped and duplicates collapsed. If nothing usable
    comes back after ``max_attempts`` calls, every expert is selected.
    """
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()
    roster_names = [n for n, _ in req.roster]
    prompt = render(
        templates.control_template,
        query=req.query,
        blackboard=req.board_view,
        roster=format_roster(req.roster),
    )
    all_dropped: list[str] = []
    reply = ""
    for _ in range(max_attempts):
        creq = CompletionRequest(model_id, "", prompt, temperature, caller=CONTROL_VIEWER, round=round)
        reply = trace.call(backend, creq, "control").text
        chosen, dropped = parse_names(reply, roster_names)
        all_dropped += dropped
        if dropped:
            trace.warn(round, "control unit named unknown agents", names=dropped)
        if chosen:
            return Selection(chosen, reply, all_dropped)
    trace.warn(round, "control unit selected nobody; falling back to all experts")
    return Selection(list(req.experts), reply, all_dropped, fallback=True)


_YES_RE = re.compile(r"^\W*yes\b", re.IGNORECASE)


def autonomous_poll(
    roster: list[AgentSpec],
    board: Blackboard,
    backend: ModelBackend,
    templates: PromptTemplates | None = None,
    *,
    redaction: Redaction = Redaction.EXCLUDE_REMOVED,
    round: int = 1,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> Selection:
    """Ablation without a control unit: each agent decides whether to respond.

    Anything other than a leading "yes" counts as no. The selection may be
    empty.
    """
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()
    chosen = []
    for agent in roster:
        user = render(
            templates.poll_template, blackboard=board.render_view(agent.name, redaction), name=agent.name
        )
        req = CompletionRequest(agent.model_id, agent.system_prompt, user, temperature, caller=agent.name, round=round)
        if _YES_RE.match(trace.call(backend, req, "poll").text):
            chosen.append(agent.name)
    return Selection(chosen, "autonomous poll")


def selection_request(
    query: str,
    board: Blackboard,
    agents: list[AgentSpec],
    redaction: Redaction = Redaction.EXCLUDE_REMOVED,
) -> SelectionRequest:
    return SelectionRequest(
        query=query,
        board_view=board.render_view(CONTROL_VIEWER, redaction),
        roster=[(a.name, a.description) for a in agents],
        experts=[a.name for a in agents if a.role is Role.EXPERT],
    )
