import json

import pytest

from bmas import CycleConfig, PromptTemplates
from bmas.answers import AnswerFormat, FormatKind
from bmas.backends import ScriptedBackend
from bmas.errors import FormatError
from bmas.harness import (
    BenchmarkItem,
    default_metric,
    item_seed,
    load_dataset,
    parse_item,
    run_benchmark,
    unique_solves,
    write_dataset,
)
from bmas.decision import SimMetric
from scenarios import POOL, decide_at, early_stop, with_query


def number_item(i, gold="4"):
    return BenchmarkItem(f"item-{i}", f"[item-{i}] What is 2+2?", AnswerFormat.number(), gold)


def bench(items, scripts, parallelism=1, **config):
    script = [entry for item, s in zip(items, scripts) for entry in with_query(s, item.question)]
    backend = ScriptedBackend(script)
    report = run_benchmark(items, CycleConfig(seed=7, **config), POOL, PromptTemplates(), backend, parallelism)
    return report, backend


def test_parse_multi_choice_item():
    item = parse_item({"id": "q1", "question": "Pick", "options": ["x", "y", "z"], "answer": "b"})
    assert item.format.kind is FormatKind.MULTI_CHOICE and item.gold == "B"
    assert item.query.splitlines()[-3:] == ["A. x", "B. y", "C. z"]


@pytest.mark.parametrize(
    "rec",
    [
        {"id": "q", "question": "Pick", "options": ["x"], "answer": "C"},
        {"id": "q", "question": "How many?", "answer": "many", "format": "number"},
        {"id": "q", "answer": "1"},
        {"id": "q", "question": "?", "answer": "1", "format": "essay"},
    ],
)
def test_parse_item_rejects(rec):
    with pytest.raises(ValueError):
        parse_item(rec)


def test_load_dataset_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"id": "a", "question": "q", "answer": "1"}\n\n{"id": "b", "question": "q"}\n')
    with pytest.raises(FormatError, match="line 3"):
        load_dataset(path)


def test_load_dataset_duplicate_ids(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"id": "a", "question": "q", "answer": "1"}\n' * 2)
    with pytest.raises(FormatError, match="duplicate"):
        load_dataset(path)


def test_dataset_roundtrip(tmp_path):
    items = [
        parse_item({"id": "m", "question": "Pick", "options": ["x", "y"], "answer": "A", "category": "law"}),
        parse_item({"id": "n", "question": "Sum?", "answer": "1,000", "format": "number"}),
    ]
    write_dataset(items, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.jsonl") == items


def test_item_seed_is_stable_and_item_specific():
    assert item_seed(7, "a") == item_seed(7, "a")
    assert len({item_seed(7, "a"), item_seed(7, "b"), item_seed(8, "a")}) == 3


def test_default_metric_per_format():
    assert default_metric(AnswerFormat.multi_choice()) is SimMetric.EXACT
    assert default_metric(AnswerFormat.number()) is SimMetric.JACCARD


def test_average_rounds_and_accuracy():
    items = [number_item(i) for i in range(1, 5)]
    report, backend = bench(items, [decide_at(k) for k in range(1, 5)])
    assert [r.rounds_executed for r in report.records] == [1, 2, 3, 4]
    assert report.average_rounds == 2.5
    assert report.accuracy == 1.0 and report.decider_rate == 1.0
    assert backend.remaining == 0


def test_wrong_gold_counts_incorrect():
    items = [number_item(1), number_item(2, gold="5")]
    report, _ = bench(items, [early_stop(), early_stop()])
    assert [r.correct for r in report.records] == [True, False]
    assert report.accuracy == 0.5


def test_token_totals_sum_over_items():
    items = [number_item(i) for i in range(1, 4)]
    report, backend = bench(items, [decide_at(k) for k in (1, 2, 3)])
    assert report.total_prompt == backend.ledger.total_prompt
    assert report.total_completion == backend.ledger.total_completion
    assert report.total_tokens == sum(r.prompt_tokens + r.completion_tokens for r in report.records)


def test_parallel_run_matches_sequential():
    items = [number_item(i) for i in range(1, 5)]
    scripts = [decide_at(k) for k in range(1, 5)]
    seq, _ = bench(items, scripts, parallelism=1)
    par, _ = bench(items, scripts, parallelism=4)
    assert [seq.traces[i.id].to_jsonl() for i in items] == [par.traces[i.id].to_jsonl() for i in items]


def test_backend_failure_is_recorded_and_run_continues():
    items = [number_item(1), number_item(2)]
    report, _ = bench(items, [early_stop()[:-1], early_stop()])
    first, second = report.records
    assert not first.correct and "no script entry" in first.error
    assert second.correct and second.error is None
    assert report.aggregates()["errors"] == 1


def test_report_outputs():
    report, _ = bench([number_item(1)], [early_stop()])
    rows = [json.loads(line) for line in report.outcomes_jsonl().splitlines()]
    assert rows[0]["id"] == "item-1" and rows[0]["correct"] is True
    table = report.to_table()
    assert "accuracy" in table and "100.00% (1/1)" in table
    assert report.to_dict()["aggregates"]["average_rounds"] == 1


def test_unique_solves():
    outcomes = {
        "bmas": {"a": True, "b": True, "c": False},
        "cot": {"a": True, "b": False, "c": True},
        "debate": {"a": False, "b": False, "c": False},
    }
    assert unique_solves(outcomes) == {"bmas": 1, "cot": 1, "debate": 0}


def test_parallelism_must_be_positive():
    with pytest.raises(ValueError):
        bench([number_item(1)], [early_stop()], parallelism=0)
