"""Shared fixtures and the acceptance-criterion report.

Tests marked ``@pytest.mark.criterion(n, "title")`` get one PASS/FAIL/SKIP
line each in the terminal summary.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_results: dict[int, tuple[str, str]] = {}


@pytest.fixture
def extraction_corpus() -> list[dict]:
    return json.loads((FIXTURES / "extraction_corpus.json").read_text(encoding="utf-8"))


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _results[n] = (status, title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, title = _results[n]
        terminalreporter.write_line(f"AC{n:02d} {status:4s} {title}")
