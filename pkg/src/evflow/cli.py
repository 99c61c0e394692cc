"""Command-line entry points.

Subcommands: ask (one question), eval (manifest benchmark), sweep
(parameter grids), oracle (evidence-quality study), trace show
(pretty-print a trace file). Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any

from .config import PipelineConfig, load_config
from .errors import ConfigConflict, EvflowError, InvalidConfig, UsageError
from .gateway import BackendScript, HttpChatClient, HttpEmbeddingClient
from .harness import (
    evaluate,
    load_manifest,
    oracle_assess,
    render_oracle_table,
    sweep,
)
from .ingest import load_frames
from .orchestrator import answer_question
from .trace import read_trace

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default="evflow_out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument(
        "--ablate",
        action="append",
        default=[],
        choices=["no-hdd", "no-hap", "no-eba", "no-spatial", "no-temporal"],
        help="disable one mechanism (repeatable)",
    )
    parser.add_argument("--tau", type=float)
    parser.add_argument("--window-k", type=int, dest="window_k")
    parser.add_argument("--topk", type=int)
    parser.add_argument("--grid-n", type=int, dest="grid_n")
    parser.add_argument("--frames-budget", type=int, dest="frames_budget")
    parser.add_argument("--mock-script", dest="mock_script", help="scripted backend JSON, replaces HTTP")


def build_parser() -> _Parser:
    parser = _Parser(prog="evflow", description="Video question answering by active evidence retrieval")
    sub = parser.add_subparsers(dest="command", required=True)

    ask = sub.add_parser("ask", help="answer one question about a frame directory")
    _common_flags(ask)
    ask.add_argument("--frames", required=True, help="directory of extracted frames")
    ask.add_argument("--question", required=True)
    ask.add_argument("--options", required=True, help='comma-separated "A:text,B:text" pairs')
    ask.add_argument("--id", default="q0", help="question id used for the trace filename")

    ev = sub.add_parser("eval", help="run a task manifest and score accuracy")
    _common_flags(ev)
    ev.add_argument("--manifest", required=True)

    sw = sub.add_parser("sweep", help="evaluate across a parameter grid")
    _common_flags(sw)
    sw.add_argument("--manifest", required=True)
    sw.add_argument("--param", choices=["k", "K", "N", "tau"])
    sw.add_argument("--values", help="comma-separated values for --param")

    orc = sub.add_parser("oracle", help="evidence-quality study against a judge model")
    _common_flags(orc)
    orc.add_argument("--manifest", required=True)

    tr = sub.add_parser("trace", help="trace file utilities")
    tr_sub = tr.add_subparsers(dest="trace_command", required=True)
    show = tr_sub.add_parser("show", help="pretty-print a trace file")
    show.add_argument("path")
    return parser


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "workers": args.workers,
        "tau": args.tau,
        "smooth_kernel": args.window_k,
        "top_k": args.topk,
        "grid_n": args.grid_n,
        "frame_budget": args.frames_budget,
    }
    if args.ablate:
        overrides["ablations"] = frozenset(a.replace("-", "_") for a in args.ablate)
    return load_config(file_path=args.config, overrides=overrides)


def _backends(args: argparse.Namespace, cfg: PipelineConfig):
    """Returns a zero-arg factory producing (chat, embedder) per question."""
    if args.mock_script:
        script = BackendScript.load(args.mock_script)
        return lambda: (script.make_chat(), script.make_embedder())
    if not cfg.chat_endpoint or not cfg.embed_endpoint:
        raise UsageError("no --mock-script given and chat_endpoint/embed_endpoint not configured")
    chat = HttpChatClient(cfg.chat_endpoint, cfg.chat_model, cfg.api_key, cfg.request_timeout)
    embedder = HttpEmbeddingClient(cfg.embed_endpoint, cfg.embed_model, cfg.api_key, cfg.request_timeout)
    return lambda: (chat, embedder)


def _parse_options(raw: str) -> list[tuple[str, str]]:
    options = []
    for chunk in raw.split(","):
        letter, sep, text = chunk.partition(":")
        if not sep or not letter.strip() or not text.strip():
            raise UsageError(f'bad option {chunk!r}, expected "LETTER:text"')
        options.append((letter.strip(), text.strip()))
    return options


def _cmd_ask(args) -> int:
    cfg = _build_config(args)
    factory = _backends(args, cfg)
    chat, embedder = factory()
    frames = load_frames(args.frames, cfg.frame_budget)
    record = answer_question(
        frames,
        args.question,
        _parse_options(args.options),
        cfg,
        chat,
        embedder,
        question_id=args.id,
        trace_dir=args.out,
    )
    if record.error is not None:
        print(f"error: {record.error}", file=sys.stderr)
        print(f"trace: {record.trace_path}", file=sys.stderr)
        return 2
    print(record.predicted)
    print(f"trace: {record.trace_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _build_config(args)
    entries = load_manifest(args.manifest)
    report = evaluate(entries, cfg, _backends(args, cfg), out_dir=args.out)
    print(f"accuracy {report.accuracy:.4f} ({report.correct}/{report.total})"
          f"  parsed={report.parsed} unparsed={report.unparsed} errored={report.errored}")
    print(f"report: {args.out}/report.json")
    return 0


def _parse_grid_values(param: str, raw: str) -> list:
    values = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        values.append(float(chunk) if param == "tau" else int(chunk))
    if not values:
        raise UsageError("--values is empty")
    return values


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    if (args.param is None) != (args.values is None):
        raise UsageError("--param and --values must be given together")
    grid = {args.param: _parse_grid_values(args.param, args.values)} if args.param else None
    entries = load_manifest(args.manifest)
    reports = sweep(entries, cfg, grid, _backends(args, cfg), out_dir=args.out)
    for report in reports:
        print(f"{report.label}: accuracy {report.accuracy:.4f} ({report.correct}/{report.total})")
    return 0


def _cmd_oracle(args) -> int:
    cfg = _build_config(args)
    factory = _backends(args, cfg)
    entries = load_manifest(args.manifest)
    judge, embedder = factory()
    planner_chat, _ = factory()
    report = oracle_assess(entries, cfg, judge, embedder, planner_chat=planner_chat)
    print(render_oracle_table(report))
    if report.skipped:
        print(f"skipped {len(report.skipped)} sample(s): {', '.join(report.skipped)}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "oracle.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"report: {path}")
    return 0


def _cmd_trace_show(args) -> int:
    events = read_trace(args.path)
    for event in events:
        payload = json.dumps(event.payload, sort_keys=True)
        if len(payload) > 120:
            payload = payload[:117] + "..."
        print(f"{event.seq:4d}  {event.stage:<18} {payload}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "ask":
            return _cmd_ask(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "trace":
            return _cmd_trace_show(args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, InvalidConfig, ConfigConflict) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EvflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
