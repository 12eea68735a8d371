"""Command-line entry points: ``bmas solve``, ``bmas bench``, ``bmas replay``.

Exit codes: 0 success, 1 usage or config error, 2 backend failure, 3 I/O.
Settings come from defaults, then the ``--config`` JSON file, then flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

from bmas.answers import AnswerFormat
from bmas.backends import ChatCompletionBackend, ModelBackend, ModelPool, ScriptedBackend
from bmas.blackboard import Redaction
from bmas.cycle import ControlMode, CycleConfig, run_cycle
from bmas.decision import SimMetric
from bmas.errors import BackendError, ConfigError, FormatError, TemplateError
from bmas.harness import load_dataset, run_benchmark
from bmas.prompts import PromptTemplates
from bmas.trace import CycleTrace

logger = logging.getLogger("bmas")

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_IO = 0, 1, 2, 3

ABLATIONS = ("no-control", "mark-removed")
DEFAULT_SCRIPTED_POOL = ["scripted"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    cycle: CycleConfig
    pool: ModelPool
    templates: PromptTemplates
    backend: str  # "live" or "scripted:PATH"
    out: Path = Path("runs")
    run_id: str = "run"
    dataset: Path | None = None
    parallelism: int = 1
    sim: SimMetric | None = None
    format: AnswerFormat = field(default_factory=AnswerFormat)

    @property
    def script_path(self) -> Path | None:
        if self.backend.startswith("scripted:"):
            return Path(self.backend[len("scripted:") :])
        return None

    def make_backend(self) -> ModelBackend:
        path = self.script_path
        if path is not None:
            if not path.is_file():
                raise FileNotFoundError(f"script file not found: {path}")
            return ScriptedBackend.from_file(path)
        return ChatCompletionBackend(self.pool)


_CYCLE_KEYS = {f.name for f in fields(CycleConfig)}
_FILE_KEYS = _CYCLE_KEYS | {
    "experts", "pool", "templates", "backend", "out", "run_id", "dataset", "parallelism", "sim",
    "ablation", "format",
}


def _read_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be an object")
    unknown = set(data) - _FILE_KEYS
    if unknown:
        raise ConfigError(f"{p}: unknown field(s): {', '.join(sorted(unknown))}")
    return data


def _answer_format(spec) -> AnswerFormat:
    if spec is None:
        return AnswerFormat.free()
    if isinstance(spec, dict):
        spec = spec.get("kind", "free"), spec.get("options", 4)
    else:
        spec = spec, 4
    name, n = spec
    if name in ("multi_choice", "mc"):
        return AnswerFormat.multi_choice(int(n))
    if name == "number":
        return AnswerFormat.number()
    if name == "free":
        return AnswerFormat.free()
    raise ConfigError(f"format: unknown answer format {name!r}")


def build_run_config(args: argparse.Namespace) -> RunConfig:
    raw = _read_config_file(args.config) if args.config else {}
    if "experts" in raw:
        raw.setdefault("expert_count", raw.pop("experts"))
    overrides = {
        "seed": args.seed,
        "max_rounds": args.max_rounds,
        "expert_count": args.experts,
        "backend": args.backend,
        "dataset": getattr(args, "dataset", None),
        "parallelism": getattr(args, "parallelism", None),
        "sim": args.sim,
        "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if args.measure_consensus:
        raw["measure_consensus"] = True
    ablations = list(raw.get("ablation", []))
    ablations += args.ablation or []
    for a in ablations:
        if a not in ABLATIONS:
            raise ConfigError(f"ablation: unknown value {a!r} (choose from {', '.join(ABLATIONS)})")
    if "no-control" in ablations:
        raw["control_mode"] = ControlMode.AUTONOMOUS_POLL.value
    if "mark-removed" in ablations:
        raw["redaction"] = Redaction.MARK_REMOVED.value

    try:
        cycle = CycleConfig(**{k: v for k, v in raw.items() if k in _CYCLE_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cycle settings: {exc}") from None

    backend = raw.get("backend", "live")
    if backend != "live" and not backend.startswith("scripted:"):
        raise ConfigError(f"backend: expected 'live' or 'scripted:PATH', got {backend!r}")
    pool = ModelPool.from_config(raw.get("pool", DEFAULT_SCRIPTED_POOL if backend != "live" else []))
    if backend != "live" and any(e.is_live for e in pool.entries):
        raise ConfigError("pool: scripted backend does not allow live endpoints (base_url)")
    if backend == "live" and not all(e.is_live for e in pool.entries):
        raise ConfigError("pool: live backend needs base_url on every pool entry")

    templates_cfg = raw.get("templates", {})
    if not isinstance(templates_cfg, dict):
        raise ConfigError("templates: expected an object mapping template name to file path")
    templates = PromptTemplates.load(templates_cfg)

    try:
        parallelism = int(raw.get("parallelism", 1))
        sim = SimMetric(raw["sim"]) if raw.get("sim") else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if parallelism < 1:
        raise ConfigError("parallelism: must be >= 1")
    return RunConfig(
        cycle=cycle,
        pool=pool,
        templates=templates,
        backend=backend,
        out=Path(raw.get("out", "runs")),
        run_id=str(raw.get("run_id", "run")),
        dataset=Path(raw["dataset"]) if raw.get("dataset") else None,
        parallelism=parallelism,
        sim=sim,
        format=_answer_format(raw.get("format")),
    )


def trace_path(out: Path, run_id: str, item_id: str) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", item_id)
    return out / run_id / f"{safe}.trace"


# -- commands -----------------------------------------------------------------


def cmd_solve(query: str, rc: RunConfig) -> int:
    backend = rc.make_backend()
    cycle = rc.cycle
    if rc.sim is not None:
        cycle = replace(cycle, sim_metric=rc.sim)
    try:
        sol, trace = run_cycle(query, cycle, rc.templates, rc.pool, backend, rc.format)
    except BackendError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            path = trace.write(trace_path(rc.out, rc.run_id, "query"))
            print(f"partial trace: {path}", file=sys.stderr)
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    path = trace.write(trace_path(rc.out, rc.run_id, "query"))
    print(sol.answer if sol.answer is not None else "(no answer)")
    print(f"outcome: {sol.outcome.value} after {sol.rounds_executed} round(s)")
    usage = trace.usage
    print(f"tokens: {usage.total_prompt} prompt + {usage.total_completion} completion")
    print(f"trace: {path}")
    return EXIT_OK


def cmd_bench(rc: RunConfig) -> int:
    if rc.dataset is None:
        raise ConfigError("dataset: no dataset given (--dataset PATH)")
    items = load_dataset(rc.dataset)
    backend = rc.make_backend()
    report = run_benchmark(items, rc.cycle, rc.pool, rc.templates, backend, rc.parallelism, rc.sim)
    run_dir = rc.out / rc.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    for item_id, trace in report.traces.items():
        trace.write(trace_path(rc.out, rc.run_id, item_id))
    (run_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (run_dir / "outcomes.jsonl").write_text(report.outcomes_jsonl(), encoding="utf-8")
    print(report.to_table())
    print(f"report: {run_dir / 'report.json'}")
    return EXIT_BACKEND if report.total and all(r.error for r in report.records) else EXIT_OK


def _short(text: str, width: int = 100) -> str:
    text = " ".join(text.split())
    return text if len(text) <= width else text[: width - 3] + "..."


def format_event(e: dict, show_calls: bool = False) -> str | None:
    t = e["type"]
    if t == "round_start":
        return f"=== round {e['round']} ==="
    if t == "selection":
        tag = ", fallback" if e.get("fallback") else ""
        return f"  select [{', '.join(e['chosen'])}] ({e['mode']}{tag})"
    if t == "post":
        where = "" if e["visibility"] == "Public" else f" [private {e['visibility'][8:-1]}]"
        return f"  #{e['id']}{where} {e['author']} {e['kind']}: {_short(e['content'])}"
    if t == "removal":
        skipped = f" (skipped {e['skipped']})" if e["skipped"] else ""
        return f"  cleaner removed {e['removed']}{skipped}"
    if t == "session_open":
        return f"  session {e['session']} opened: {', '.join(e['participants'])}"
    if t == "session_close":
        return f"  session {e['session']} closed; summaries {e['summaries']}"
    if t == "directive":
        return f"  directive from {e['agent']}: {e['directive']['kind']}"
    if t == "vote":
        kind = "binding" if e["binding"] else "non-binding"
        scores = ", ".join(f"{s['agent']}={s['score']:g}" for s in e["scores"])
        return f"  vote ({kind}, {e['metric']}): winner {e['winner']!r} [{scores}]"
    if t == "warning":
        return f"  warning: {e['message']}"
    if t == "call":
        if not show_calls:
            return None
        return f"  call {e['agent']} ({e['purpose']}): {e['prompt_tokens']}+{e['completion_tokens']} tokens"
    return f"  {t}"


def _event_agent(e: dict) -> str | None:
    return e.get("agent", e.get("author"))


def render_timeline(
    trace: CycleTrace,
    round: int | None = None,
    agent: str | None = None,
    kind: str | None = None,
    show_calls: bool = False,
) -> str:
    lines = []
    if round is None and agent is None and kind is None:
        lines.append(f"query: {_short(trace.header.get('query', ''))}")
        group = trace.header.get("group", [])
        lines.append("agents: " + ", ".join(f"{a['name']}({a['model_id']})" for a in group))
    for e in trace.events:
        if round is not None and e.get("round") != round:
            continue
        if agent is not None and _event_agent(e) != agent:
            continue
        if kind is not None and e.get("kind") != kind:
            continue
        line = format_event(e, show_calls)
        if line is not None:
            lines.append(line)
    if round is None and agent is None and kind is None:
        s = trace.summary
        lines.append(
            f"outcome: {s.get('outcome')} answer={s.get('answer')!r} rounds={s.get('rounds_executed')}"
        )
        usage = s.get("usage") or {}
        lines.append(
            f"tokens: {usage.get('prompt_tokens', 0)} prompt + {usage.get('completion_tokens', 0)} completion"
        )
    return "\n".join(lines)


def cmd_replay(path: str, round=None, agent=None, kind=None, show_calls=False, dump=False) -> int:
    trace = CycleTrace.read(path)
    if dump:
        sys.stdout.write(trace.to_jsonl())
    else:
        print(render_timeline(trace, round, agent, kind, show_calls))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _run_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--max-rounds", type=int, metavar="K")
    p.add_argument("--experts", type=int, metavar="N")
    p.add_argument("--backend", metavar="scripted:PATH|live")
    p.add_argument("--sim", choices=[m.value for m in SimMetric])
    p.add_argument("--ablation", action="append", choices=ABLATIONS)
    p.add_argument("--measure-consensus", action="store_true")
    p.add_argument("--out", metavar="DIR")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmas", description="Blackboard multi-agent problem solving.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _run_options()

    p = sub.add_parser("solve", parents=[common], help="solve one query")
    p.add_argument("query")

    p = sub.add_parser("bench", parents=[common], help="run a benchmark dataset")
    p.add_argument("--dataset", metavar="PATH")
    p.add_argument("--parallelism", type=int, metavar="N")

    p = sub.add_parser("replay", help="print the timeline of a trace file")
    p.add_argument("trace")
    p.add_argument("--round", type=int)
    p.add_argument("--agent")
    p.add_argument("--kind", help="message kind, e.g. DebateTurn")
    p.add_argument("--calls", action="store_true", help="also list completion calls")
    p.add_argument("--dump", action="store_true", help="re-serialize the trace to stdout")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args.trace, args.round, args.agent, args.kind, args.calls, args.dump)
        rc = build_run_config(args)
        if args.command == "solve":
            return cmd_solve(args.query, rc)
        return cmd_bench(rc)
    except (ConfigError, TemplateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
