"""Runs evaluation tasks against the agent and grades the transcripts.

Three suites ship with the package (see :mod:`.suites`): tool selection,
model selection and data analysis. Each task runs in a fresh session. In
replay mode a per-task recorded provider drives the conversation, so results
are deterministic and fully offline; with a live provider the same grading
applies but the report records the provider identity and is informational
only.

Grading never looks at the provider, only at the stored transcript and the
files the session produced.
"""
from __future__ import annotations

import csv
import io
import json
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..errors import PhenoflowError, ValidationError
from ..events import SessionEvent
from ..llm import ChatProvider, ReplayProvider
from ..manager import ApprovalPolicy, Manager
from ..pipelines import PipelineZoo
from ..sessions import SessionStore
from ..toolkit import ToolContext, register_builtin_tools
from ..tools import ModelZoo, ToolRegistry

BENIGN_TOOLS = frozenset(
    {"get_model_zoo", "get_pipeline_zoo", "get_pipeline_info", "get_dataset_format"}
)

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_STAT_REL_TOL = 1e-6


@dataclass
class GoldStep:
    """One mandatory tool call; ``args`` lists only the argument values that
    are checked, everything else is free."""

    tool: str
    args: dict[str, Any] = field(default_factory=dict)


@dataclass
class EvalTask:
    suite: str
    id: str
    prompt: str
    gold: Any
    replay_turns: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class EvalSuite:
    name: str
    tasks: list[EvalTask]
    fixtures: dict[str, str] = field(default_factory=dict)


@dataclass
class TaskResult:
    suite: str
    task_id: str
    verdict: str  # "pass" | "fail" | "error"
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    mode: str  # "replay" | "live"
    provider: dict[str, Any]
    results: list[TaskResult]

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def passes(self) -> int:
        return sum(1 for r in self.results if r.verdict == "pass")

    @property
    def success_rate(self) -> float:
        return self.passes / self.total if self.results else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "mode": self.mode,
            "provider": self.provider,
            "total": self.total,
            "passes": self.passes,
            "success_rate": self.success_rate,
            "results": [
                {
                    "suite": r.suite,
                    "task_id": r.task_id,
                    "verdict": r.verdict,
                    "detail": r.detail,
                }
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["suite", "task_id", "verdict", "detail"])
        for r in self.results:
            writer.writerow([r.suite, r.task_id, r.verdict, r.detail])
        return out.getvalue()


def grade_tool_sequence(
    actual: Sequence[tuple[str, dict[str, Any]]],
    gold: Sequence[GoldStep],
    mode: str = "strict_order",
) -> tuple[bool, str]:
    """Compare proposed tool calls against the mandatory steps.

    ``strict_order`` walks the gold steps as a subsequence: every actual call
    must either match the next gold step (tool name plus every checked
    argument) or be a benign read-only call. A call whose name matches the
    pending step but whose checked arguments differ fails immediately, naming
    the argument. ``set`` only requires each gold step to match some call,
    order and extras ignored.
    """
    if mode not in ("strict_order", "set"):
        raise ValidationError(f"unknown grading mode {mode!r}")
    if mode == "set":
        unused = list(actual)
        for step in gold:
            hit = next(
                (
                    c
                    for c in unused
                    if c[0] == step.tool
                    and all(c[1].get(k) == v for k, v in step.args.items())
                ),
                None,
            )
            if hit is None:
                return False, f"missing step {step.tool!r}"
            unused.remove(hit)
        return True, f"matched {len(gold)} steps"

    idx = 0
    for name, args in actual:
        if idx >= len(gold):
            if name in BENIGN_TOOLS:
                continue
            return False, f"unexpected call {name!r} after the final step"
        step = gold[idx]
        if name == step.tool:
            for key, want in step.args.items():
                got = args.get(key)
                if got != want:
                    return False, f"{name}: parameter {key!r} expected {want!r}, got {got!r}"
            idx += 1
            continue
        if name in BENIGN_TOOLS:
            continue
        return False, f"unexpected call {name!r} before {step.tool!r}"
    if idx < len(gold):
        return False, f"missing step {gold[idx].tool!r}"
    return True, f"matched {len(gold)} steps in order"


_TYPE_KEYWORDS = (
    ("instance_segmentation", "segmentation"),
    ("classification", "classification"),
    ("regression", "regression"),
)


def grade_model_selection(answer: str, gold: Sequence[str]) -> tuple[bool, str]:
    """The answer must name exactly one model type and it must be admissible."""
    text = (answer or "").lower()
    found = [label for label, keyword in _TYPE_KEYWORDS if keyword in text]
    if not found:
        return False, "no model type mentioned"
    if len(found) > 1:
        return False, "ambiguous: mentions " + " and ".join(found)
    pick = found[0]
    if pick in gold:
        return True, f"recommended {pick}"
    return False, f"recommended {pick}, expected one of {sorted(gold)}"


def _png_size(path: Path) -> tuple[int, int] | None:
    try:
        head = path.read_bytes()[:33]
    except OSError:
        return None
    if len(head) < 24 or head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        return None
    width, height = struct.unpack(">II", head[16:24])
    return width, height


def _collect_answers(events: Sequence[SessionEvent]) -> tuple[list[float], str]:
    """Numbers and text the session reported: structured values from table
    analyses plus every number in answer and summary texts."""
    numbers: list[float] = []
    texts: list[str] = []
    for event in events:
        if event.kind == "tool_result" and event.payload.get("status") == "ok":
            result = event.payload.get("result") or {}
            for v in result.get("values") or []:
                if isinstance(v, (int, float)):
                    numbers.append(float(v))
            answer = result.get("answer")
            if isinstance(answer, str):
                texts.append(answer)
        elif event.kind in ("summary", "assistant_message"):
            texts.append(str(event.payload.get("text", "")))
    combined = "\n".join(texts)
    for raw in _NUMBER_RE.findall(combined):
        try:
            numbers.append(float(raw))
        except ValueError:
            continue
    return numbers, combined


def grade_data_analysis(
    gold: dict[str, Any], events: Sequence[SessionEvent], workdir: str | Path
) -> tuple[bool, str]:
    """Check reported values (exact for counts and ids, relative tolerance for
    statistics) or, for plot tasks, that the declared PNG exists and is valid."""
    artifact = gold.get("artifact")
    if artifact:
        path = Path(workdir) / artifact
        if not path.is_file():
            return False, f"missing plot {artifact}"
        dims = _png_size(path)
        if dims is None:
            return False, f"{artifact} is not a valid PNG"
        width, height = dims
        if width <= 0 or height <= 0:
            return False, f"{artifact} has zero dimensions"
        return True, f"plot {artifact} ({width}x{height})"

    numbers, text = _collect_answers(events)
    for spec in gold.get("values", []):
        want = float(spec["value"])
        if spec.get("kind", "stat") == "count":
            ok = any(abs(n - want) < 1e-9 for n in numbers)
        else:
            ok = any(abs(n - want) <= _STAT_REL_TOL * max(1.0, abs(want)) for n in numbers)
        if not ok:
            return False, f"expected value {spec['value']} was not reported"
    for needle in gold.get("mentions", []):
        if needle not in text:
            return False, f"expected mention of {needle!r}"
    return True, "all expected values reported"


def _grade(task: EvalTask, events: Sequence[SessionEvent], workdir: Path) -> tuple[bool, str]:
    if task.suite == "tool_selection":
        actual = [
            (e.payload["tool"], e.payload.get("arguments") or {})
            for e in events
            if e.kind == "tool_call_proposed"
        ]
        return grade_tool_sequence(actual, task.gold)
    if task.suite == "model_selection":
        summaries = [e.payload.get("text", "") for e in events if e.kind == "summary"]
        if not summaries:
            summaries = [
                e.payload.get("text", "")
                for e in events
                if e.kind in ("assistant_message", "plan")
            ]
        return grade_model_selection("\n".join(summaries), task.gold)
    if task.suite == "data_analysis":
        return grade_data_analysis(task.gold, events, workdir)
    raise ValidationError(f"unknown suite {task.suite!r}")


def _provider_identity(provider: ChatProvider) -> dict[str, Any]:
    identity: dict[str, Any] = {"class": type(provider).__name__}
    config = getattr(provider, "config", None)
    if config is not None:
        for key in ("base_url", "model", "temperature", "max_tokens"):
            value = getattr(config, key, None)
            if value is not None:
                identity[key] = value
    return identity


def _last_error(events: Sequence[SessionEvent]) -> str:
    for event in reversed(events):
        if event.kind == "error":
            return str(event.payload.get("message", ""))
    return ""


def _run_task(
    task: EvalTask, suite: EvalSuite, store: SessionStore, provider: ChatProvider | None
) -> TaskResult:
    registry = ToolRegistry()
    register_builtin_tools(registry)
    task_provider = provider or ReplayProvider(task.replay_turns)
    manager = Manager(store, registry, task_provider, policy=ApprovalPolicy(mode="auto"))
    session_id = store.create_session({"purpose": f"eval {suite.name} {task.id}"})
    workdir = store.artifacts_dir(session_id)
    for rel, content in suite.fixtures.items():
        target = workdir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
    ctx = ToolContext(
        store=store,
        session_id=session_id,
        registry=registry,
        model_zoo=ModelZoo(),
        pipeline_zoo=PipelineZoo(Path(store.root) / "_eval_pipelines"),
        provider=task_provider,
    )
    try:
        status = manager.run(session_id, task.prompt, ctx)
    except PhenoflowError as exc:
        return TaskResult(suite.name, task.id, "error", str(exc))
    events = store.events(session_id)
    if status != "terminated":
        detail = _last_error(events) or f"session ended with status {status}"
        return TaskResult(suite.name, task.id, "error", detail)
    ok, detail = _grade(task, events, workdir)
    return TaskResult(suite.name, task.id, "pass" if ok else "fail", detail)


def run_suite(
    suite: EvalSuite,
    store_root: str | Path | None = None,
    provider: ChatProvider | None = None,
) -> SuiteReport:
    """Run every task of a suite in its own session and grade the transcripts.

    Without a provider each task replays its recorded turns; passing one
    switches to live mode, whose report is informational and records the
    provider identity and decoding settings.
    """
    root = Path(store_root) if store_root else Path(tempfile.mkdtemp(prefix="phenoflow_eval_"))
    store = SessionStore(root)
    mode = "live" if provider is not None else "replay"
    identity = _provider_identity(provider) if provider is not None else {"class": "ReplayProvider"}
    results = [_run_task(task, suite, store, provider) for task in suite.tasks]
    return SuiteReport(suite=suite.name, mode=mode, provider=identity, results=results)
