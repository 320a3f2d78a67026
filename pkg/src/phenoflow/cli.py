"""Command line front end.

Every command accepts ``--config`` and ``--store-root``; the latter overrides
the ``store_root`` key from the config file. Exit codes: 0 on success, 1 on a
runtime failure, 2 on bad invocation (missing prompt file, unknown pipeline
argument and the like).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Iterable

from .app import Workbench, load_config
from .errors import PhenoflowError
from .events import SessionEvent

_TEXT_KINDS = ("user_message", "plan", "assistant_message", "summary")


def _short(value: Any, limit: int = 160) -> str:
    text = value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)
    text = " ".join(text.split())
    if len(text) > limit:
        return text[: limit - 4] + " ..."
    return text


def format_event(event: SessionEvent) -> str:
    p = event.payload
    if event.kind in _TEXT_KINDS:
        body = str(p.get("text", ""))
    elif event.kind == "tool_call_proposed":
        gate = " (needs approval)" if p.get("approval_required") else ""
        body = f"{p.get('tool')} {_short(p.get('arguments', {}))}{gate}"
    elif event.kind == "approval_requested":
        body = f"{p.get('tool')} [{p.get('call_id')}]"
    elif event.kind == "approval_resolved":
        verdict = "approved" if p.get("approved") else "rejected"
        note = p.get("note") or ""
        body = f"{verdict}{': ' + note if note else ''}"
    elif event.kind == "tool_call_started":
        body = str(p.get("tool"))
    elif event.kind == "tool_result":
        if p.get("status") == "ok":
            body = f"{p.get('tool')} ok {_short(p.get('result', {}))}"
        else:
            body = f"{p.get('tool')} error: {_short(p.get('error', ''))}"
    elif event.kind == "artifact_created":
        body = f"{p.get('path')} ({p.get('bytes')} bytes)"
    elif event.kind == "terminated":
        body = str(p.get("reason", ""))
    elif event.kind == "error":
        body = str(p.get("message", ""))
    else:
        body = _short(p)
    return f"[{event.seq:03d}] {event.kind}: {body}"


def _print_events(wb: Workbench, session_id: str, after: int) -> int:
    """Print events with seq > after, returning the new high-water mark."""
    last = after
    for event in wb.store.events(session_id, from_seq=after + 1):
        print(format_event(event))
        last = event.seq
    return last


def _make_workbench(args: argparse.Namespace) -> Workbench:
    overrides: dict[str, str] = {}
    if getattr(args, "store_root", None):
        overrides["store_root"] = args.store_root
    config = load_config(getattr(args, "config", None), overrides=overrides)
    return Workbench(config)


def cmd_chat(args: argparse.Namespace) -> int:
    with _make_workbench(args) as wb:
        session_id = wb.create_session()
        print(f"session {session_id} (type 'exit' to quit)")
        seen = 0
        while True:
            try:
                line = input("you> ").strip()
            except (EOFError, KeyboardInterrupt):
                print()
                break
            if not line:
                continue
            if line.lower() in ("exit", "quit"):
                break
            try:
                status = wb.send_message(session_id, line)
                seen = _print_events(wb, session_id, seen)
                while status == "awaiting_approval":
                    call = wb.manager.pending_approval(session_id)
                    if call is None:
                        break
                    answer = input(f"approve {call.name}? [y/N] ").strip().lower()
                    approved = answer in ("y", "yes")
                    note = "" if approved else input("reason (optional)> ").strip()
                    status = wb.resolve_approval(session_id, call.id, approved, note=note)
                    seen = _print_events(wb, session_id, seen)
            except PhenoflowError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            if status in ("terminated", "failed"):
                return 0 if status == "terminated" else 1
        return 0


def cmd_run(args: argparse.Namespace) -> int:
    prompt_path = Path(args.prompt_file)
    if not prompt_path.is_file():
        print(f"prompt file not found: {prompt_path}", file=sys.stderr)
        return 2
    text = prompt_path.read_text(encoding="utf-8").strip()
    if not text:
        print(f"prompt file is empty: {prompt_path}", file=sys.stderr)
        return 2
    with _make_workbench(args) as wb:
        session_id = wb.create_session()
        print(f"session {session_id}")
        seen = 0
        try:
            status = wb.send_message(session_id, text)
            seen = _print_events(wb, session_id, seen)
            while status == "awaiting_approval":
                call = wb.manager.pending_approval(session_id)
                if call is None:
                    break
                if args.reject_tools:
                    status = wb.resolve_approval(
                        session_id, call.id, False, note="rejected by --reject-tools"
                    )
                else:
                    status = wb.resolve_approval(
                        session_id, call.id, True, note="auto-approved (batch run)"
                    )
                seen = _print_events(wb, session_id, seen)
        except PhenoflowError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0 if status == "terminated" else 1


def _parse_pipeline_args(pairs: Iterable[str]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"pipeline arguments take the form name=value, got {pair!r}")
        try:
            values[key] = json.loads(raw)
        except json.JSONDecodeError:
            values[key] = raw
    return values


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        values = _parse_pipeline_args(args.arg or [])
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    with _make_workbench(args) as wb:
        try:
            session_id, report = wb.replay_pipeline(args.name, values)
        except PhenoflowError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"session {session_id}")
        for step in report.steps:
            label = step.tool if step.kind == "tool_call" else "script"
            detail = f" ({step.detail})" if step.detail and step.status != "ok" else ""
            print(f"  step {step.index}: {label} -> {step.status}{detail}")
            for name in step.artifacts:
                print(f"    artifact {name}")
        if report.ok:
            print(f"pipeline {args.name!r} completed")
            return 0
        print(f"pipeline {args.name!r} failed", file=sys.stderr)
        return 1


def cmd_zoo(args: argparse.Namespace) -> int:
    with _make_workbench(args) as wb:
        entries = wb.model_zoo.entries()
        if not entries:
            print("model zoo is empty")
            return 0
        for entry in sorted(entries, key=lambda e: e.identifier):
            caps = ",".join(entry.capabilities) or "-"
            print(f"{entry.checkpoint_ref}\n    task={entry.task} species={entry.species} capabilities={caps}")
            if entry.description:
                print(f"    {entry.description}")
        return 0


def cmd_pipelines(args: argparse.Namespace) -> int:
    with _make_workbench(args) as wb:
        names = wb.pipeline_zoo.names()
        if not names:
            print("no saved pipelines")
            return 0
        for name in names:
            info = wb.pipeline_zoo.get(name).info()
            params = ", ".join(p["name"] for p in info["params"]) or "-"
            print(f"{name}: {len(info['steps'])} steps, params: {params}")
            if info["description"]:
                print(f"    {info['description']}")
        return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evals import SUITE_NAMES, load_suite, run_suite

    chosen = list(SUITE_NAMES) if args.suite == "all" else [args.suite]
    report_dir = Path(args.report)
    report_dir.mkdir(parents=True, exist_ok=True)
    provider = None
    if args.live:
        wb = _make_workbench(args)
        provider = wb.provider
        if provider is None:
            print("--live needs a provider configured (see the provider config keys)", file=sys.stderr)
            return 2
    errored = 0
    for suite_name in chosen:
        suite = load_suite(suite_name)
        report = run_suite(suite, store_root=args.store_root, provider=provider)
        json_path = report_dir / f"{suite_name}.json"
        csv_path = report_dir / f"{suite_name}.csv"
        json_path.write_text(report.to_json(), encoding="utf-8")
        csv_path.write_text(report.to_csv(), encoding="utf-8")
        errored += sum(1 for r in report.results if r.verdict == "error")
        print(
            f"{suite_name}: {report.passes}/{report.total} passed"
            f" -> {json_path}, {csv_path}"
        )
    return 1 if errored else 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    wb = _make_workbench(args)
    app = create_app(wb)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a KEY=VALUE config file")
    common.add_argument("--store-root", help="directory for session stores (overrides config)")

    parser = argparse.ArgumentParser(
        prog="phenoflow",
        description="Conversational workbench for image-based plant phenotyping.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("chat", parents=[common], help="interactive session").set_defaults(fn=cmd_chat)

    run_p = sub.add_parser("run", parents=[common], help="run a prompt file to completion")
    run_p.add_argument("prompt_file")
    run_p.add_argument(
        "--reject-tools",
        action="store_true",
        help="reject every approval request instead of auto-approving",
    )
    run_p.set_defaults(fn=cmd_run)

    replay_p = sub.add_parser("replay", parents=[common], help="replay a saved pipeline")
    replay_p.add_argument("name")
    replay_p.add_argument(
        "--arg",
        action="append",
        metavar="NAME=VALUE",
        help="pipeline parameter (repeatable); values parse as JSON when possible",
    )
    replay_p.set_defaults(fn=cmd_replay)

    sub.add_parser("zoo", parents=[common], help="list model zoo entries").set_defaults(fn=cmd_zoo)
    sub.add_parser("pipelines", parents=[common], help="list saved pipelines").set_defaults(
        fn=cmd_pipelines
    )

    eval_p = sub.add_parser("eval", parents=[common], help="run an evaluation suite")
    eval_p.add_argument(
        "suite",
        choices=["tool_selection", "model_selection", "data_analysis", "all"],
    )
    eval_p.add_argument("--report", default="./eval_reports", help="directory for report files")
    eval_p.add_argument(
        "--live",
        action="store_true",
        help="grade against the configured provider instead of the recorded transcripts",
    )
    eval_p.set_defaults(fn=cmd_eval)

    serve_p = sub.add_parser("serve", parents=[common], help="start the HTTP service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8042)
    serve_p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PhenoflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
