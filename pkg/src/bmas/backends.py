"""Completion providers and token accounting.

Two backends ship here:

* :class:`ScriptedBackend` replays fixture replies. Token counts are
  whitespace-delimited word counts so accounting is exact and assertable.
* :class:`ChatCompletionBackend` talks to any OpenAI-compatible
  ``/chat/completions`` endpoint and records the provider's usage fields.

Nothing outside this module touches the network.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import httpx

from bmas.errors import (
    BackendFailure,
    ConfigError,
    MalformedResponse,
    RateLimited,
    ScriptMismatch,
    TransportError,
)

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.7


def count_tokens(text: str) -> int:
    """Whitespace token count used by the scripted backend."""
    return len(text.split())


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    system: str
    user: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None
    # bookkeeping only, never sent over the wire
    caller: str = ""
    round: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if not self.user.strip():
            raise ValueError("user text must be non-empty")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    model_id: str
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    model: str | None = None  # provider-side model name; defaults to model_id
    base_url: str | None = None
    api_key_env: str | None = None

    @property
    def is_live(self) -> bool:
        return self.base_url is not None


@dataclass(frozen=True)
class ModelPool:
    entries: tuple[ModelEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("model pool must not be empty")
        ids = [e.model_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate model ids in pool: {ids}")

    @classmethod
    def of(cls, *model_ids: str) -> ModelPool:
        return cls(tuple(ModelEntry(m) for m in model_ids))

    @classmethod
    def from_config(cls, raw: Iterable) -> ModelPool:
        entries = []
        for item in raw:
            if isinstance(item, str):
                entries.append(ModelEntry(item))
            elif isinstance(item, dict) and "model_id" in item:
                unknown = set(item) - {"model_id", "model", "base_url", "api_key_env"}
                if unknown:
                    raise ConfigError(f"pool entry has unknown fields: {sorted(unknown)}")
                entries.append(ModelEntry(**item))
            else:
                raise ConfigError(f"pool entry must be a string or have 'model_id': {item!r}")
        try:
            return cls(tuple(entries))
        except ValueError as exc:
            raise ConfigError(f"pool: {exc}") from None

    @property
    def model_ids(self) -> list[str]:
        return [e.model_id for e in self.entries]

    def __contains__(self, model_id: str) -> bool:
        return any(e.model_id == model_id for e in self.entries)

    def get(self, model_id: str) -> ModelEntry:
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(model_id)

    @property
    def utility_model(self) -> str:
        """Model used for agent generation and the control unit."""
        return self.entries[0].model_id


def pick_model(pool: ModelPool, rng: random.Random) -> str:
    """Uniform draw from the pool, consuming exactly one ``rng.random()``."""
    ids = pool.model_ids
    return ids[int(rng.random() * len(ids))]


@dataclass(frozen=True)
class UsageRecord:
    agent: str
    round: int
    model_id: str
    prompt_tokens: int
    completion_tokens: int


@dataclass
class UsageLedger:
    """Append-only per-call token records with running totals.

    Appends are locked so one ledger can be shared by concurrent cycles.
    """

    records: list[UsageRecord] = field(default_factory=list)
    total_prompt: int = 0
    total_completion: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, rec: UsageRecord) -> None:
        with self._lock:
            self.records.append(rec)
            self.total_prompt += rec.prompt_tokens
            self.total_completion += rec.completion_tokens

    @property
    def total(self) -> int:
        return self.total_prompt + self.total_completion

    @property
    def calls(self) -> int:
        return len(self.records)

    def by_agent(self) -> dict[str, tuple[int, int]]:
        out: dict[str, tuple[int, int]] = {}
        with self._lock:
            for r in self.records:
                p, c = out.get(r.agent, (0, 0))
                out[r.agent] = (p + r.prompt_tokens, c + r.completion_tokens)
        return out

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "calls": len(self.records),
                "prompt_tokens": self.total_prompt,
                "completion_tokens": self.total_completion,
                "total_tokens": self.total_prompt + self.total_completion,
            }


class ModelBackend:
    """Base class: subclasses implement ``_complete``; ``complete`` records usage."""

    def __init__(self) -> None:
        self.ledger = UsageLedger()

    def complete(self, req: CompletionRequest) -> CompletionResult:
        result = self._complete(req)
        self.ledger.record(
            UsageRecord(
                req.caller, req.round, result.model_id, result.prompt_tokens, result.completion_tokens
            )
        )
        return result

    def _complete(self, req: CompletionRequest) -> CompletionResult:
        raise NotImplementedError


# -- scripted -----------------------------------------------------------------


@dataclass
class ScriptEntry:
    """One scripted reply.

    ``match`` must be a substring of the request's user text. ``agent``, when
    set, must equal the request's caller. ``repeat`` entries are never
    consumed.
    """

    reply: str
    match: str = ""
    agent: str | None = None
    repeat: bool = False

    def matches(self, req: CompletionRequest) -> bool:
        if self.agent is not None and self.agent != req.caller:
            return False
        return self.match in req.user


class ScriptedBackend(ModelBackend):
    """Deterministic backend replaying an ordered script.

    Each request takes the first unconsumed entry that matches it. A request
    with no matching entry raises :class:`ScriptMismatch`, so a test script
    must anticipate every call.
    """

    def __init__(self, entries: Iterable[ScriptEntry | dict]) -> None:
        super().__init__()
        self.entries = [e if isinstance(e, ScriptEntry) else ScriptEntry(**e) for e in entries]
        self._used = [False] * len(self.entries)
        self._lock = threading.Lock()
        self.calls: list[tuple[CompletionRequest, CompletionResult]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedBackend:
        """Load a script from JSON: a list of entries or ``{"entries": [...]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data.get("entries")
        if not isinstance(data, list):
            raise ConfigError(f"{path}: script must be a list of entries")
        try:
            return cls(data)
        except TypeError as exc:
            raise ConfigError(f"{path}: bad script entry: {exc}") from None

    def _complete(self, req: CompletionRequest) -> CompletionResult:
        with self._lock:
            for i, entry in enumerate(self.entries):
                if self._used[i] or not entry.matches(req):
                    continue
                if not entry.repeat:
                    self._used[i] = True
                break
            else:
                raise ScriptMismatch(
                    f"no script entry for caller={req.caller!r} round={req.round}: "
                    f"{req.user[:120]!r}"
                )
            result = CompletionResult(
                text=entry.reply,
                prompt_tokens=count_tokens(req.system) + count_tokens(req.user),
                completion_tokens=count_tokens(entry.reply),
                model_id=req.model_id,
                latency_ms=0,
            )
            self.calls.append((req, result))
            return result

    @property
    def remaining(self) -> int:
        return sum(1 for e, used in zip(self.entries, self._used) if not used and not e.repeat)


# -- live ---------------------------------------------------------------------


class ChatCompletionBackend(ModelBackend):
    """OpenAI-compatible chat-completions client.

    Transport errors, HTTP 429 and 5xx responses are retried up to
    ``max_attempts`` times with exponential backoff starting at
    ``backoff_s``; anything else fails immediately.
    """

    def __init__(
        self,
        pool: ModelPool,
        *,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        env: dict[str, str] | None = None,
    ) -> None:
        super().__init__()
        for entry in pool.entries:
            if not entry.is_live:
                raise ConfigError(f"pool entry {entry.model_id!r} has no base_url")
        self.pool = pool
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._env = os.environ if env is None else env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self, entry: ModelEntry) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if entry.api_key_env:
            key = self._env.get(entry.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {entry.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    @staticmethod
    def build_payload(entry: ModelEntry, req: CompletionRequest) -> dict:
        payload = {
            "model": entry.model or entry.model_id,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
        }
        if req.max_tokens is not None:
            payload["max_tokens"] = req.max_tokens
        return payload

    @staticmethod
    def parse_response(data: object, model_id: str, latency_ms: int) -> CompletionResult:
        try:
            text = data["choices"][0]["message"]["content"]
            usage = data["usage"]
            prompt_tokens = int(usage["prompt_tokens"])
            completion_tokens = int(usage["completion_tokens"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc!r}") from None
        if not isinstance(text, str):
            raise MalformedResponse("message content is not a string")
        return CompletionResult(text, prompt_tokens, completion_tokens, model_id, latency_ms)

    def _post_once(self, entry: ModelEntry, req: CompletionRequest) -> CompletionResult:
        url = entry.base_url.rstrip("/") + "/chat/completions"
        start = time.monotonic()
        try:
            resp = self._client.post(url, json=self.build_payload(entry, req), headers=self._headers(entry))
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        latency_ms = int((time.monotonic() - start) * 1000)
        if resp.status_code == 429:
            raise RateLimited(f"{url}: HTTP 429")
        if resp.status_code >= 500:
            raise TransportError(f"{url}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendFailure(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
        except ValueError:
            raise MalformedResponse(f"{url}: response is not JSON") from None
        return self.parse_response(data, req.model_id, latency_ms)

    def _complete(self, req: CompletionRequest) -> CompletionResult:
        try:
            entry = self.pool.get(req.model_id)
        except KeyError:
            raise BackendFailure(f"model {req.model_id!r} is not in the pool") from None
        delay = self.backoff_s
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                return self._post_once(entry, req)
            except (TransportError, RateLimited) as exc:
                last = exc
                logger.warning("attempt %d/%d for %s failed: %s", attempt, self.max_attempts, req.model_id, exc)
                if attempt < self.max_attempts:
                    self._sleep(delay)
                    delay *= 2
            except MalformedResponse as exc:
                raise BackendFailure(str(exc), cause=exc) from exc
        raise BackendFailure(f"gave up after {self.max_attempts} attempts: {last}", cause=last)
