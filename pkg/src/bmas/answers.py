"""Answer extraction and judging for ``\\boxed{answer}`` replies.

``extract_answer`` is total and idempotent: its output, fed back in,
comes out unchanged. Multi-choice answers reduce to an option label or to
text containing no label; number answers reduce to a plain number token
or to text containing no number.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum


class FormatKind(str, Enum):
    MULTI_CHOICE = "multi_choice"
    NUMBER = "number"
    FREE = "free"


@dataclass(frozen=True)
class AnswerFormat:
    kind: FormatKind = FormatKind.FREE
    labels: tuple[str, ...] = ()

    @classmethod
    def multi_choice(cls, n_options: int = 4) -> AnswerFormat:
        if not 1 <= n_options <= 26:
            raise ValueError(f"need 1..26 options, got {n_options}")
        return cls(FormatKind.MULTI_CHOICE, tuple(string.ascii_uppercase[:n_options]))

    @classmethod
    def number(cls) -> AnswerFormat:
        return cls(FormatKind.NUMBER)

    @classmethod
    def free(cls) -> AnswerFormat:
        return cls(FormatKind.FREE)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> AnswerFormat:
        return cls(FormatKind(d["kind"]), tuple(d.get("labels", ())))


_BOXED_RE = re.compile(r"boxed\s*\{")


def last_boxed(text: str) -> str | None:
    """Content of the last balanced ``boxed{...}`` span, or None."""
    for m in reversed(list(_BOXED_RE.finditer(text))):
        depth = 1
        for i in range(m.end(), len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    return text[m.end() : i]
    return None


def normalize(text: str) -> str:
    """Trim, collapse whitespace, strip surrounding ``$``."""
    prev = None
    while prev != text:
        prev = text
        text = " ".join(text.split()).strip("$")
    return text


_NUMBER_RE = re.compile(r"(?:(?<!\w)-)?\d+(?:,\d{3})*(?:\.\d+)?(?!\d)")


def _last_number(text: str) -> str | None:
    found = _NUMBER_RE.findall(text)
    return found[-1].replace(",", "") if found else None


def _choice(text: str, labels: tuple[str, ...]) -> str | None:
    m = re.fullmatch(r"\(?([A-Za-z])\)?[.:]?", text)
    if m and m.group(1).upper() in labels:
        return m.group(1).upper()
    m = re.match(r"\(?([A-Z])[).:]\s", text)
    if m and m.group(1) in labels:
        return m.group(1)
    standalone = [c for c in re.findall(r"(?<![A-Za-z\\])([A-Z])(?![A-Za-z])", text) if c in labels]
    return standalone[-1] if standalone else None


def _reduce(text: str, fmt: AnswerFormat) -> str:
    text = normalize(text)
    if fmt.kind is FormatKind.MULTI_CHOICE:
        return _choice(text, fmt.labels) or text
    if fmt.kind is FormatKind.NUMBER:
        return _last_number(text) or text
    return text


def extract_answer(reply: str, fmt: AnswerFormat = AnswerFormat()) -> str:
    """Normalized answer from a model reply.

    Takes the last ``boxed{...}`` span if present, otherwise the whole
    reply, then reduces it per format: an option label, the last number,
    or the normalized text.
    """
    boxed = last_boxed(reply)
    return _reduce(reply if boxed is None else boxed, fmt)


def _as_decimal(text: str) -> Decimal | None:
    try:
        value = Decimal(text.replace(",", ""))
    except InvalidOperation:
        return None
    return value if value.is_finite() else None


def judge(extracted: str, gold: str, fmt: AnswerFormat) -> bool:
    """Strict match: label equality, exact numeric equality, or string equality.

    Free-form answers are compared as normalized strings, so equivalent
    expressions written differently (``1/2`` vs ``\\frac{1}{2}``) do not match.
    """
    if fmt.kind is FormatKind.MULTI_CHOICE:
        return extracted.strip().upper() == gold.strip().upper()
    if fmt.kind is FormatKind.NUMBER:
        a, b = _as_decimal(extracted), _as_decimal(normalize(gold))
        return a is not None and b is not None and a == b
    return normalize(extracted) == normalize(gold)
