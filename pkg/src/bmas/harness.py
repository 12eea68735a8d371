"""Benchmark machinery: datasets, judging, and run reports.

Dataset files hold one JSON record per line::

    {"id": "q1", "question": "...", "options": ["..", ".."], "answer": "B",
     "format": "multi_choice", "category": "anatomy"}

``options``, ``format`` and ``category`` are optional. Multi-choice gold
answers are option labels (A, B, ...).
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import mean
from typing import Iterable

from bmas.answers import AnswerFormat, FormatKind, extract_answer, judge
from bmas.backends import ModelBackend, ModelPool
from bmas.cycle import CycleConfig, run_cycle
from bmas.decision import SimMetric
from bmas.errors import BackendFailure, FormatError
from bmas.prompts import PromptTemplates
from bmas.trace import CycleTrace

logger = logging.getLogger(__name__)

_FORMAT_ALIASES = {
    "multi_choice": FormatKind.MULTI_CHOICE,
    "multi-choice": FormatKind.MULTI_CHOICE,
    "mc": FormatKind.MULTI_CHOICE,
    "number": FormatKind.NUMBER,
    "free": FormatKind.FREE,
    "uncertain": FormatKind.FREE,
}


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    question: str
    format: AnswerFormat
    gold: str
    options: tuple[str, ...] = ()
    category: str | None = None

    @property
    def query(self) -> str:
        """Question text shown to the agents, options included."""
        if not self.options:
            return self.question
        lines = [self.question, ""]
        lines += [f"{label}. {text}" for label, text in zip(self.format.labels, self.options)]
        return "\n".join(lines)

    def to_record(self) -> dict:
        rec = {"id": self.id, "question": self.question, "answer": self.gold, "format": self.format.kind.value}
        if self.options:
            rec["options"] = list(self.options)
        if self.category is not None:
            rec["category"] = self.category
        return rec


def parse_item(rec: object, format_hint: str | None = None) -> BenchmarkItem:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    for key in ("id", "question", "answer"):
        if key not in rec or rec[key] is None or str(rec[key]).strip() == "":
            raise ValueError(f"missing field {key!r}")
    options = rec.get("options") or []
    if not isinstance(options, list):
        raise ValueError("'options' must be a list")
    fmt_name = rec.get("format") or format_hint or ("multi_choice" if options else "free")
    kind = _FORMAT_ALIASES.get(str(fmt_name).lower())
    if kind is None:
        raise ValueError(f"unknown format {fmt_name!r}")
    gold = str(rec["answer"]).strip()
    if kind is FormatKind.MULTI_CHOICE:
        if not options:
            raise ValueError("multi-choice item without options")
        fmt = AnswerFormat.multi_choice(len(options))
        gold = gold.upper()
        if gold not in fmt.labels:
            raise ValueError(f"gold answer {gold!r} is not one of {list(fmt.labels)}")
    elif kind is FormatKind.NUMBER:
        fmt = AnswerFormat.number()
        if not judge(gold, gold, fmt):
            raise ValueError(f"gold answer {gold!r} is not a number")
    else:
        fmt = AnswerFormat.free()
    category = rec.get("category")
    return BenchmarkItem(
        str(rec["id"]), str(rec["question"]), fmt, gold, tuple(str(o) for o in options),
        None if category is None else str(category),
    )


def load_dataset(path: str | Path, format_hint: str | None = None) -> list[BenchmarkItem]:
    """Read a line-delimited dataset; raises FormatError at the first bad line."""
    items = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                item = parse_item(json.loads(line), format_hint)
            except (json.JSONDecodeError, ValueError) as exc:
                raise FormatError(f"{path}: {exc}", line=lineno) from None
            if item.id in seen:
                raise FormatError(f"{path}: duplicate id {item.id!r}", line=lineno)
            seen.add(item.id)
            items.append(item)
    return items


def write_dataset(items: Iterable[BenchmarkItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_record(), ensure_ascii=False) + "\n")


def item_seed(run_seed: int, item_id: str) -> int:
    """Schedule-independent per-item seed."""
    digest = hashlib.sha256(f"{run_seed}:{item_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def default_metric(fmt: AnswerFormat) -> SimMetric:
    return SimMetric.EXACT if fmt.kind is FormatKind.MULTI_CHOICE else SimMetric.JACCARD


@dataclass
class ItemRecord:
    id: str
    correct: bool
    answer: str | None
    gold: str
    outcome: str | None
    rounds_executed: int
    consensus: float | None
    prompt_tokens: int
    completion_tokens: int
    calls: int
    category: str | None = None
    error: str | None = None


@dataclass
class RunReport:
    records: list[ItemRecord]
    config: dict = field(default_factory=dict)
    traces: dict[str, CycleTrace] = field(default_factory=dict, repr=False)

    @property
    def total(self) -> int:
        return len(self.records)

    @property
    def correct(self) -> int:
        return sum(r.correct for r in self.records)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.records else 0.0

    @property
    def average_rounds(self) -> float:
        done = [r.rounds_executed for r in self.records if r.error is None]
        return mean(done) if done else 0.0

    @property
    def total_prompt(self) -> int:
        return sum(r.prompt_tokens for r in self.records)

    @property
    def total_completion(self) -> int:
        return sum(r.completion_tokens for r in self.records)

    @property
    def total_tokens(self) -> int:
        return self.total_prompt + self.total_completion

    @property
    def consensus_rate(self) -> float | None:
        vals = [r.consensus for r in self.records if r.consensus is not None]
        return mean(vals) if vals else None

    @property
    def decider_rate(self) -> float:
        return sum(r.outcome == "DeciderSolution" for r in self.records) / self.total if self.records else 0.0

    def aggregates(self) -> dict:
        return {
            "items": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "average_rounds": self.average_rounds,
            "decider_rate": self.decider_rate,
            "consensus_rate": self.consensus_rate,
            "total_prompt_tokens": self.total_prompt,
            "total_completion_tokens": self.total_completion,
            "total_tokens": self.total_tokens,
            "errors": sum(r.error is not None for r in self.records),
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "aggregates": self.aggregates(),
            "judging": "strict: option labels, exact numbers, normalized strings (no symbolic equivalence)",
        }

    def outcomes_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) + "\n" for r in self.records)

    def to_table(self) -> str:
        agg = self.aggregates()
        consensus = "-" if agg["consensus_rate"] is None else f"{100 * agg['consensus_rate']:.1f}%"
        rows = [
            ("control mode", str(self.config.get("control_mode", "-"))),
            ("items", str(agg["items"])),
            ("accuracy", f"{100 * agg['accuracy']:.2f}% ({agg['correct']}/{agg['items']})"),
            ("average rounds", f"{agg['average_rounds']:.2f}"),
            ("decided by decider", f"{100 * agg['decider_rate']:.1f}%"),
            ("consensus rate", consensus),
            ("total prompt tokens", f"{agg['total_prompt_tokens']:,}"),
            ("total completion tokens", f"{agg['total_completion_tokens']:,}"),
            ("total tokens", f"{agg['total_tokens']:,}"),
            ("errors", str(agg["errors"])),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _run_item(item, config, pool, templates, backend, sim_metric) -> tuple[ItemRecord, CycleTrace]:
    cfg = replace(
        config,
        seed=item_seed(config.seed, item.id),
        sim_metric=sim_metric or default_metric(item.format),
    )
    try:
        sol, trace = run_cycle(item.query, cfg, templates, pool, backend, item.format)
    except BackendFailure as exc:
        logger.warning("item %s failed: %s", item.id, exc)
        trace = exc.trace if exc.trace is not None else CycleTrace()
        usage = trace.usage
        rec = ItemRecord(
            item.id, False, None, item.gold, None, trace.summary.get("rounds_executed", 0), None,
            usage.total_prompt, usage.total_completion, usage.calls, item.category, str(exc),
        )
        return rec, trace
    answer = sol.answer
    correct = answer is not None and judge(answer, extract_answer(item.gold, item.format), item.format)
    usage = trace.usage
    rec = ItemRecord(
        item.id, correct, answer, item.gold, sol.outcome.value, sol.rounds_executed, sol.consensus,
        usage.total_prompt, usage.total_completion, usage.calls, item.category,
    )
    return rec, trace


def run_benchmark(
    items: list[BenchmarkItem],
    config: CycleConfig,
    pool: ModelPool,
    templates: PromptTemplates,
    backend: ModelBackend,
    parallelism: int = 1,
    sim_metric: SimMetric | None = None,
) -> RunReport:
    """One independent cycle per item, ``parallelism`` at a time.

    The similarity metric defaults to exact match for multi-choice items and
    token Jaccard otherwise. Item-level backend failures are recorded as
    incorrect and the run continues.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
        results = list(
            pool_exec.map(lambda it: _run_item(it, config, pool, templates, backend, sim_metric), items)
        )
    report_config = config.to_dict()
    report_config["sim_metric"] = sim_metric.value if sim_metric else "per-format"
    return RunReport(
        records=[r for r, _ in results],
        config=report_config,
        traces={item.id: t for item, (_, t) in zip(items, results)},
    )


def unique_solves(outcomes: dict[str, dict[str, bool]]) -> dict[str, int]:
    """Items each method answered correctly when no other method did."""
    counts = {m: 0 for m in outcomes}
    item_ids = set().union(*(o.keys() for o in outcomes.values())) if outcomes else set()
    for item_id in item_ids:
        solvers = [m for m, o in outcomes.items() if o.get(item_id)]
        if len(solvers) == 1:
            counts[solvers[0]] += 1
    return counts

