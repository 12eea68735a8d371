"""The agent group: five predefined roles plus query-specific experts."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from bmas.backends import DEFAULT_TEMPERATURE, CompletionRequest, ModelBackend, ModelPool, pick_model
from bmas.blackboard import Blackboard, MessageKind, Redaction
from bmas.prompts import PromptTemplates, render
from bmas.trace import CycleTrace

logger = logging.getLogger(__name__)

GENERATOR_NAME = "agent-generator"


class Role(str, Enum):
    PLANNER = "Planner"
    DECIDER = "Decider"
    CRITIC = "Critic"
    CONFLICT_RESOLVER = "ConflictResolver"
    CLEANER = "Cleaner"
    EXPERT = "Expert"


# name, role, identity, description; order is the roster order
PREDEFINED = (
    (
        "planner",
        Role.PLANNER,
        "the planner",
        "You make plans to solve the problem and decompose it into smaller tasks when it is complex.",
    ),
    (
        "decider",
        Role.DECIDER,
        "the decider",
        "You assess whether the messages on the blackboard are enough to give the final solution, "
        "and give it if so.",
    ),
    (
        "critic",
        Role.CRITIC,
        "the critic",
        "You point out errors and hallucinations in the messages on the blackboard so that the "
        "responsible agents rethink their output.",
    ),
    (
        "conflict-resolver",
        Role.CONFLICT_RESOLVER,
        "the conflict-resolver",
        "You detect contradictions among messages on the blackboard and name the agents whose "
        "messages conflict.",
    ),
    (
        "cleaner",
        Role.CLEANER,
        "the cleaner",
        "You detect useless or redundant messages on the blackboard and remove them.",
    ),
)
PREDEFINED_NAMES = tuple(p[0] for p in PREDEFINED)

ROLE_INSTRUCTIONS = {
    Role.DECIDER: (
        "If the blackboard is enough to solve the problem, reply with a line "
        "'FINAL ANSWER: \\boxed{answer}'. Otherwise reply 'NOT ENOUGH' and say what is missing."
    ),
    Role.CLEANER: (
        "List the ids of the messages to remove on one line 'REMOVE: #id, #id', "
        "or reply 'REMOVE: none'."
    ),
    Role.CONFLICT_RESOLVER: (
        "If messages conflict, reply with a line 'CONFLICT: name, name' naming the agents "
        "that wrote them. Otherwise reply 'NO CONFLICT'."
    ),
}

ROLE_KIND = {
    Role.PLANNER: MessageKind.PLAN,
    Role.DECIDER: MessageKind.SOLUTION,
    Role.CRITIC: MessageKind.CRITIQUE,
    Role.CONFLICT_RESOLVER: MessageKind.CONFLICT_NOTICE,
    Role.CLEANER: MessageKind.SYSTEM,
    Role.EXPERT: MessageKind.EXPERT_ANSWER,
}


@dataclass(frozen=True)
class AgentSpec:
    name: str
    role: Role
    identity: str
    description: str
    model_id: str = ""
    system_prompt: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "role": self.role.value,
            "identity": self.identity,
            "description": self.description,
            "model_id": self.model_id,
        }


@dataclass(frozen=True)
class AgentGroup:
    predefined: tuple[AgentSpec, ...]
    experts: tuple[AgentSpec, ...]

    def __post_init__(self) -> None:
        roles = [a.role for a in self.predefined]
        if sorted(roles) != sorted(p[1] for p in PREDEFINED):
            raise ValueError(f"group needs exactly one agent per predefined role, got {roles}")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError(f"agent names must be unique: {names}")

    @property
    def agents(self) -> tuple[AgentSpec, ...]:
        return self.predefined + self.experts

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.agents]

    def __getitem__(self, name: str) -> AgentSpec:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(a.name == name for a in self.agents)

    def __len__(self) -> int:
        return len(self.agents)

    def roster(self) -> list[tuple[str, str]]:
        return [(a.name, a.description) for a in self.agents]

    def snapshot(self) -> list[dict]:
        return [a.to_dict() for a in self.agents]


# -- directives ---------------------------------------------------------------


@dataclass(frozen=True)
class SolutionFound:
    text: str


@dataclass(frozen=True)
class NotEnough:
    pass


@dataclass(frozen=True)
class RemoveMessages:
    ids: tuple[int, ...]


@dataclass(frozen=True)
class NoConflict:
    pass


@dataclass(frozen=True)
class Conflict:
    names: tuple[str, ...]


Directive = Union[SolutionFound, NotEnough, RemoveMessages, NoConflict, Conflict]


def directive_record(d: Directive | None) -> dict | None:
    if d is None:
        return None
    rec = {"kind": type(d).__name__}
    if isinstance(d, SolutionFound):
        rec["text"] = d.text
    elif isinstance(d, RemoveMessages):
        rec["ids"] = list(d.ids)
    elif isinstance(d, Conflict):
        rec["names"] = list(d.names)
    return rec


_FINAL_RE = re.compile(r"FINAL\s+ANSWER\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)
_REMOVE_RE = re.compile(r"REMOVE\s*:\s*(.*)", re.IGNORECASE)
_NO_CONFLICT_RE = re.compile(r"\bNO\s+CONFLICTS?\b", re.IGNORECASE)
_CONFLICT_RE = re.compile(r"CONFLICTS?\s*:\s*(.*)", re.IGNORECASE)


def parse_decider(reply: str) -> SolutionFound | NotEnough:
    m = _FINAL_RE.search(reply)
    if m and m.group(1).strip():
        return SolutionFound(m.group(1).strip())
    return NotEnough()


def parse_cleaner(reply: str) -> RemoveMessages | None:
    m = _REMOVE_RE.search(reply)
    if not m:
        return None
    return RemoveMessages(tuple(int(x) for x in re.findall(r"#?(\d+)", m.group(1))))


def parse_conflict(reply: str) -> NoConflict | Conflict | None:
    if _NO_CONFLICT_RE.search(reply):
        return NoConflict()
    m = _CONFLICT_RE.search(reply)
    if not m:
        return None
    names = []
    for part in re.split(r"[,;]|\band\b", m.group(1)):
        name = part.strip().strip(".'\"`*").lower()
        if name and name not in names:
            names.append(name)
    return Conflict(tuple(names))


_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def parse_experts(reply: str) -> list[tuple[str, str]]:
    """``identity | description`` lines, deduplicated by identity."""
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for line in reply.splitlines():
        if "|" not in line:
            continue
        identity, _, description = _BULLET_RE.sub("", line).partition("|")
        identity, description = identity.strip(), description.strip()
        if not identity or identity.lower() in seen:
            continue
        seen.add(identity.lower())
        out.append((identity, description))
    return out


# -- generation ---------------------------------------------------------------


def generate_experts(
    query: str,
    n: int,
    backend: ModelBackend,
    pool: ModelPool,
    rng: random.Random,
    templates: PromptTemplates | None = None,
    *,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    max_attempts: int = 2,
) -> list[AgentSpec]:
    """Ask the generation model for ``n`` (identity, description) experts.

    Extra experts are dropped. When the model keeps returning too few, the
    remaining slots get generic domain experts. Each expert's base model is
    drawn from the pool in order, one rng step per expert.
    """
    if n < 1:
        raise ValueError(f"expert count must be >= 1, got {n}")
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()
    system = render(templates.generation_instruction, query=query, n=n)
    found: list[tuple[str, str]] = []
    for _ in range(max_attempts):
        req = CompletionRequest(
            pool.utility_model, system, query, temperature, caller=GENERATOR_NAME, round=0
        )
        reply = trace.call(backend, req, "generate").text
        for identity, description in parse_experts(reply):
            if identity.lower() not in {i.lower() for i, _ in found}:
                found.append((identity, description))
        if len(found) >= n:
            break
    if len(found) < n:
        trace.warn(0, f"agent generation returned {len(found)} of {n} experts; filling with generic experts")
        taken = {i.lower() for i, _ in found}
        k = 1
        while len(found) < n:
            identity = f"domain expert {k}"
            k += 1
            if identity in taken:
                continue
            found.append((identity, "A generalist expert in the domain of the problem."))
    return [
        AgentSpec(f"expert{i}", Role.EXPERT, identity, description, pick_model(pool, rng))
        for i, (identity, description) in enumerate(found[:n], start=1)
    ]


def build_group(
    query: str,
    experts: list[AgentSpec],
    templates: PromptTemplates,
    pool: ModelPool,
    rng: random.Random,
) -> AgentGroup:
    """Bind the predefined roles to drawn models and render every system prompt."""
    if not experts:
        raise ValueError("at least one expert is required")
    predefined = [
        AgentSpec(name, role, identity, description, pick_model(pool, rng))
        for name, role, identity, description in PREDEFINED
    ]
    rendered = []
    for spec in predefined + list(experts):
        if spec.model_id not in pool:
            raise ValueError(f"{spec.name}: model {spec.model_id!r} is not in the pool")
        prompt = render(
            templates.agent_template,
            identity=spec.identity,
            description=spec.description,
            query=query,
            name=spec.name,
        )
        if spec.role in ROLE_INSTRUCTIONS:
            prompt = prompt.rstrip("\n") + "\n\n" + ROLE_INSTRUCTIONS[spec.role] + "\n"
        rendered.append(
            AgentSpec(spec.name, spec.role, spec.identity, spec.description, spec.model_id, prompt)
        )
    return AgentGroup(tuple(rendered[: len(predefined)]), tuple(rendered[len(predefined) :]))


# -- acting -------------------------------------------------------------------


@dataclass
class Action:
    kind: MessageKind
    content: str
    directive: Directive | None = None
    warnings: list[str] = field(default_factory=list)


def act(
    agent: AgentSpec,
    board: Blackboard,
    backend: ModelBackend,
    redaction: Redaction = Redaction.EXCLUDE_REMOVED,
    templates: PromptTemplates | None = None,
    *,
    round: int = 1,
    trace: CycleTrace | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> Action:
    """One completion for ``agent`` over its view of the board.

    Does not mutate the board; the caller posts ``content`` with ``kind``
    and applies the directive.
    """
    templates = templates or PromptTemplates()
    trace = trace if trace is not None else CycleTrace()
    user = render(
        templates.act_template, blackboard=board.render_view(agent.name, redaction), name=agent.name
    )
    req = CompletionRequest(
        agent.model_id, agent.system_prompt, user, temperature, caller=agent.name, round=round
    )
    reply = trace.call(backend, req, "act").text
    kind = ROLE_KIND[agent.role]
    action = Action(kind, reply)
    if agent.role is Role.DECIDER:
        action.directive = parse_decider(reply)
        if isinstance(action.directive, NotEnough):
            action.kind = MessageKind.SYSTEM
    elif agent.role is Role.CLEANER:
        action.directive = parse_cleaner(reply)
        if action.directive is None:
            action.warnings.append("cleaner reply has no REMOVE directive")
    elif agent.role is Role.CONFLICT_RESOLVER:
        action.directive = parse_conflict(reply)
        if action.directive is None:
            action.warnings.append("conflict-resolver reply has no CONFLICT directive")
    for w in action.warnings:
        logger.warning("%s: %s", agent.name, w)
    return action
