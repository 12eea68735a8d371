"""Prompt templates.

Templates use ``str.format`` placeholders (``{query}``, ``{identity}``,
``{description}``, ``{blackboard}``, ...). Literal braces are doubled, so
the answer marker is written ``\\boxed{{answer}}`` in a template file.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, fields, replace
from pathlib import Path

from bmas.errors import TemplateError

AGENT_TEMPLATE = """\
You are {identity}. {description}
You are one member of a team that solves problems together through a shared blackboard.
You have no memory besides the blackboard: everything you and the others said is on it.
Messages are listed as [#id] (round r) author: content.

The problem:
{query}
"""

GENERATION_INSTRUCTION = """\
You are an agent generator. Given a problem, propose {n} different experts from domains \
related to it who together could solve it.
Write exactly one expert per line in the form:
identity | short description of the expertise
Do not number the lines and write nothing else.

Problem:
{query}
"""

CONTROL_TEMPLATE = """\
You are the control unit of a team that solves problems on a shared blackboard.
Based on the problem, the current blackboard and the agents' abilities, choose the agents \
that should act next, in the order they should act. Choose the decider once the blackboard \
holds enough to answer.

Problem:
{query}

Agents:
{roster}

Blackboard:
{blackboard}

Reply with only the chosen agent names, comma-separated.
"""

ACT_TEMPLATE = """\
Blackboard:
{blackboard}

You are {name}. Write your message for the blackboard.
"""

POLL_TEMPLATE = """\
Blackboard:
{blackboard}

You are {name}. Decide on your own whether you should respond to the current blackboard. \
Reply YES or NO.
"""

DEBATE_TEMPLATE = """\
Blackboard:
{blackboard}

You are {name}. In private session {session} you are discussing a conflict with {others}. \
State your argument (turn {turn} of {turns}).
"""

SUMMARY_TEMPLATE = """\
Blackboard:
{blackboard}

You are {name}. The private discussion in {session} is over. Write your revised message \
for the public blackboard.
"""

ANSWER_TEMPLATE = """\
Blackboard:
{blackboard}

You are {name}. Based on the blackboard, give your final answer to the problem in the form \
\\boxed{{answer}}.
"""


@dataclass(frozen=True)
class PromptTemplates:
    agent_template: str = AGENT_TEMPLATE
    generation_instruction: str = GENERATION_INSTRUCTION
    control_template: str = CONTROL_TEMPLATE
    act_template: str = ACT_TEMPLATE
    poll_template: str = POLL_TEMPLATE
    debate_template: str = DEBATE_TEMPLATE
    summary_template: str = SUMMARY_TEMPLATE
    answer_template: str = ANSWER_TEMPLATE

    @classmethod
    def load(cls, paths: dict[str, str | Path]) -> PromptTemplates:
        """Override defaults from template files.

        Keys are field names, with or without the ``_template`` suffix
        (``agent``, ``control``, ``generation_instruction``...). Raises
        ``FileNotFoundError`` naming the missing path.
        """
        names = {f.name for f in fields(cls)}
        overrides = {}
        for key, path in paths.items():
            name = key if key in names else f"{key}_template"
            if key == "generation":
                name = "generation_instruction"
            if name not in names:
                raise TemplateError(f"unknown template {key!r}")
            p = Path(path)
            if not p.is_file():
                raise FileNotFoundError(f"template file not found: {p}")
            overrides[name] = p.read_text(encoding="utf-8")
        return replace(cls(), **overrides)


def placeholders(template: str) -> set[str]:
    try:
        return {name for _, name, _, _ in string.Formatter().parse(template) if name}
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from None


def render(template: str, **values: object) -> str:
    """Fill ``template``; every placeholder it names must be bound."""
    missing = placeholders(template) - values.keys()
    if missing:
        raise TemplateError(f"unbound placeholder(s): {', '.join(sorted(missing))}")
    try:
        return template.format(**values)
    except (IndexError, KeyError, ValueError) as exc:
        raise TemplateError(f"cannot render template: {exc!r}") from None
