"""Shared message store: one public space plus private debate sessions.

The blackboard is the only channel agents have. Every agent prompt is a
rendering of it, so the rendering is deterministic and cites messages by id
(the cleaner and conflict-resolver refer to messages that way).

Removal never deletes: a removed message becomes a tombstone that keeps its
content for the trace but is left out of (or flagged in) every rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from bmas.errors import NotParticipant, UnknownAgent, UnknownMessageId, UnknownSession

QUERY_AUTHOR = "user"
CONTROL_VIEWER = "control-unit"


class MessageKind(str, Enum):
    QUERY = "Query"
    PLAN = "Plan"
    EXPERT_ANSWER = "ExpertAnswer"
    CRITIQUE = "Critique"
    CONFLICT_NOTICE = "ConflictNotice"
    DEBATE_TURN = "DebateTurn"
    SUMMARY = "Summary"
    SOLUTION = "Solution"
    CANDIDATE_ANSWER = "CandidateAnswer"
    SYSTEM = "System"


class MessageState(str, Enum):
    ACTIVE = "Active"
    REMOVED = "Removed"


class Redaction(str, Enum):
    """How removed messages show up in a rendered view."""

    EXCLUDE_REMOVED = "ExcludeRemoved"
    MARK_REMOVED = "MarkRemoved"


PROTECTED_KINDS = frozenset({MessageKind.QUERY, MessageKind.SOLUTION})


@dataclass
class Message:
    id: int
    author: str
    round: int
    seq: int
    kind: MessageKind
    content: str
    session: str | None = None  # None means public
    state: MessageState = MessageState.ACTIVE

    @property
    def is_public(self) -> bool:
        return self.session is None

    @property
    def visibility(self) -> str:
        return "Public" if self.session is None else f"Private({self.session})"

    def to_record(self) -> dict:
        """Stable export record (one line of a board dump)."""
        return {
            "id": self.id,
            "author": self.author,
            "round": self.round,
            "seq": self.seq,
            "kind": self.kind.value,
            "visibility": self.visibility,
            "state": self.state.value,
            "content": self.content,
        }


class Blackboard:
    """Ordered public space plus named private sessions.

    The query is posted at construction as message 0 in round 0; every
    other post happens in a round >= 1. Agents must be registered before
    they can view the board or join a session.

    A board is single-writer: one cycle owns it and serializes all
    mutations.
    """

    def __init__(self, query: str, agents: Iterable[str] = ()) -> None:
        self.query = query
        self.messages: list[Message] = []
        self.private_sessions: dict[str, frozenset[str]] = {}
        self.next_id = 0
        self._agents: set[str] = {CONTROL_VIEWER}
        self._round_seq: dict[int, int] = {}
        self._append(QUERY_AUTHOR, 0, MessageKind.QUERY, query, None)
        self.register(agents)

    # -- registration ---------------------------------------------------------

    def register(self, names: Iterable[str]) -> None:
        for name in names:
            self._agents.add(name)

    @property
    def agents(self) -> frozenset[str]:
        return frozenset(self._agents)

    def _require_agent(self, name: str) -> None:
        if name not in self._agents:
            raise UnknownAgent(f"agent {name!r} is not registered on this blackboard")

    # -- mutation -------------------------------------------------------------

    def _append(
        self, author: str, round: int, kind: MessageKind, content: str, session: str | None
    ) -> Message:
        seq = self._round_seq.get(round, 0) + 1
        self._round_seq[round] = seq
        msg = Message(self.next_id, author, round, seq, MessageKind(kind), content, session)
        self.messages.append(msg)
        self.next_id += 1
        return msg

    def post(
        self,
        author: str,
        round: int,
        kind: MessageKind,
        content: str,
        session: str | None = None,
    ) -> int:
        """Append a message and return its id.

        Pass ``session`` to post privately; the author must then be one of
        the session's participants.
        """
        if round < 1:
            raise ValueError(f"round must be >= 1, got {round}")
        if MessageKind(kind) is MessageKind.QUERY:
            raise ValueError("a blackboard holds exactly one Query message")
        if self.messages and round < self.messages[-1].round:
            raise ValueError(f"round {round} precedes the latest round {self.messages[-1].round}")
        if session is not None:
            if session not in self.private_sessions:
                raise UnknownSession(session)
            if author not in self.private_sessions[session]:
                raise NotParticipant(f"{author!r} is not a participant of {session}")
        return self._append(author, round, kind, content, session).id

    def remove(self, ids: Iterable[int], requested_by: str) -> list[int]:
        """Tombstone messages; returns the ids whose state actually changed.

        Query and Solution messages, private messages and messages already
        removed are skipped without error.
        """
        if requested_by != "cleaner":
            raise PermissionError(f"only the cleaner may remove messages, not {requested_by!r}")
        ids = list(ids)
        for mid in ids:
            if not 0 <= mid < len(self.messages):
                raise UnknownMessageId(str(mid))
        removed = []
        for mid in ids:
            msg = self.messages[mid]
            if (
                msg.kind in PROTECTED_KINDS
                or not msg.is_public
                or msg.state is MessageState.REMOVED
            ):
                continue
            msg.state = MessageState.REMOVED
            removed.append(mid)
        return removed

    def open_private_session(self, participants: Iterable[str]) -> str:
        members = frozenset(participants)
        if not members:
            raise UnknownAgent("a private session needs at least one participant")
        for name in sorted(members):
            self._require_agent(name)
        session_id = f"ps-{len(self.private_sessions) + 1}"
        self.private_sessions[session_id] = members
        return session_id

    # -- reading --------------------------------------------------------------

    def get(self, mid: int) -> Message:
        if not 0 <= mid < len(self.messages):
            raise UnknownMessageId(str(mid))
        return self.messages[mid]

    def visible_to(self, viewer: str) -> Iterator[Message]:
        for msg in self.messages:
            if msg.session is None or viewer in self.private_sessions[msg.session]:
                yield msg

    def render_view(
        self, viewer: str, redaction: Redaction = Redaction.EXCLUDE_REMOVED
    ) -> str:
        """Chronological listing of everything ``viewer`` may see.

        One message per entry, ``[#id] (round r) author: content``. Private
        entries carry the session id inside the parentheses.
        """
        self._require_agent(viewer)
        redaction = Redaction(redaction)
        lines = []
        for msg in self.visible_to(viewer):
            removed = msg.state is MessageState.REMOVED
            if removed and redaction is Redaction.EXCLUDE_REMOVED:
                continue
            where = f"round {msg.round}" if msg.is_public else f"round {msg.round}, private {msg.session}"
            line = f"[#{msg.id}] ({where}) {msg.author}: {msg.content}"
            if removed:
                line = "[REDUNDANT] " + line
            lines.append(line)
        return "\n".join(lines)

    def dump(self) -> list[dict]:
        return [m.to_record() for m in self.messages]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n" for rec in self.dump()
        )

    def __len__(self) -> int:
        return len(self.messages)

    def __repr__(self) -> str:
        return f"<Blackboard messages={len(self.messages)} sessions={len(self.private_sessions)}>"


def message_from_record(rec: dict) -> Message:
    vis = rec["visibility"]
    session = None if vis == "Public" else vis[len("Private(") : -1]
    return Message(
        id=rec["id"],
        author=rec["author"],
        round=rec["round"],
        seq=rec["seq"],
        kind=MessageKind(rec["kind"]),
        content=rec["content"],
        session=session,
        state=MessageState(rec["state"]),
    )


__all__ = [
    "Blackboard",
    "CONTROL_VIEWER",
    "Message",
    "MessageKind",
    "MessageState",
    "QUERY_AUTHOR",
    "Redaction",
    "message_from_record",
]
