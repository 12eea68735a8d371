"""Exception hierarchy shared by every module."""

from __future__ import annotations


class BmasError(Exception):
    """Base class for all errors raised by this package."""


# -- blackboard ---------------------------------------------------------------


class BlackboardError(BmasError):
    pass


class UnknownSession(BlackboardError):
    pass


class NotParticipant(BlackboardError):
    pass


class UnknownAgent(BlackboardError):
    pass


class UnknownMessageId(BlackboardError):
    pass


# -- prompts / agents ---------------------------------------------------------


class TemplateError(BmasError):
    pass


# -- backends -----------------------------------------------------------------


class BackendError(BmasError):
    pass


class ScriptMismatch(BackendError):
    """The scripted backend had no unconsumed entry matching a request."""


class TransportError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class BackendFailure(BackendError):
    """Terminal backend failure; aborts the running cycle.

    When raised out of ``run_cycle`` the partial trace is attached as
    ``trace``.
    """

    def __init__(self, message: str, *, cause: Exception | None = None) -> None:
        super().__init__(message)
        self.cause = cause
        self.trace = None


# -- harness / cli ------------------------------------------------------------


class FormatError(BmasError):
    """A dataset or trace file could not be parsed."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(BmasError):
    pass


class NoCandidates(BmasError):
    """Every agent failed to produce a candidate answer."""
