"""Audited record of one blackboard cycle.

A trace is a list of plain JSON-able event dicts framed by a header record
(config and agent group) and a summary record (outcome, usage, final board).
Serialization is canonical (sorted keys, fixed separators) so two runs with
the same script and seed produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from bmas.backends import CompletionRequest, CompletionResult, ModelBackend, UsageLedger, UsageRecord
from bmas.errors import FormatError


def dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


@dataclass
class CycleTrace:
    header: dict = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    usage: UsageLedger = field(default_factory=UsageLedger, compare=False)

    # -- recording ------------------------------------------------------------

    def emit(self, type: str, **fields) -> dict:
        event = {"type": type, **fields}
        self.events.append(event)
        return event

    def record_post(self, board, mid: int) -> None:
        rec = board.get(mid).to_record()
        del rec["state"]
        self.emit("post", **rec)

    def warn(self, round: int, message: str, **fields) -> None:
        self.emit("warning", round=round, message=message, **fields)

    def call(self, backend: ModelBackend, req: CompletionRequest, purpose: str) -> CompletionResult:
        """Run a completion and record the full exchange."""
        result = backend.complete(req)
        self.usage.record(
            UsageRecord(req.caller, req.round, result.model_id, result.prompt_tokens, result.completion_tokens)
        )
        self.emit(
            "call",
            round=req.round,
            agent=req.caller,
            purpose=purpose,
            model=result.model_id,
            system=req.system,
            user=req.user,
            reply=result.text,
            prompt_tokens=result.prompt_tokens,
            completion_tokens=result.completion_tokens,
        )
        return result

    # -- querying -------------------------------------------------------------

    def of_type(self, type: str) -> list[dict]:
        return [e for e in self.events if e["type"] == type]

    def calls(self, agent: str | None = None, purpose: str | None = None) -> list[dict]:
        return [
            e
            for e in self.of_type("call")
            if (agent is None or e["agent"] == agent) and (purpose is None or e["purpose"] == purpose)
        ]

    def prompt_of(self, event: dict) -> str:
        return event["system"] + "\n" + event["user"]

    @property
    def outcome(self) -> str | None:
        return self.summary.get("outcome")

    @property
    def rounds_executed(self) -> int:
        return self.summary.get("rounds_executed", 0)

    # -- serialization --------------------------------------------------------

    def records(self) -> Iterator[dict]:
        yield {"type": "header", **self.header}
        yield from self.events
        yield {"type": "summary", **self.summary}

    def to_jsonl(self) -> str:
        return "".join(dumps(r) + "\n" for r in self.records())

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def from_jsonl(cls, text: str) -> CycleTrace:
        records = []
        offset = 0
        for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
            if line.strip():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"byte offset {offset + exc.pos}: {exc.msg}", line=lineno) from None
                if not isinstance(rec, dict) or "type" not in rec:
                    raise FormatError(f"byte offset {offset}: record without a type", line=lineno)
                records.append((lineno, rec))
            offset += len(line.encode("utf-8"))
        if not records or records[0][1]["type"] != "header":
            raise FormatError("trace does not start with a header record", line=1)
        if records[-1][1]["type"] != "summary":
            raise FormatError("trace does not end with a summary record", line=records[-1][0])
        header = dict(records[0][1])
        summary = dict(records[-1][1])
        del header["type"], summary["type"]
        trace = cls(header=header, events=[r for _, r in records[1:-1]], summary=summary)
        for e in trace.of_type("call"):
            trace.usage.record(
                UsageRecord(e["agent"], e["round"], e["model"], e["prompt_tokens"], e["completion_tokens"])
            )
        return trace

    @classmethod
    def read(cls, path: str | Path) -> CycleTrace:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))
