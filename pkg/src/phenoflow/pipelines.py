"""Recording finished sessions as replayable pipeline manifests.

A manifest is a JSON document (version 1) holding the successful tool calls
and script sources of a session in execution order, with user-chosen literals
lifted into ``${param}`` placeholders. Replay substitutes arguments back in
and executes the steps directly, without any chat provider involved, so a
recorded analysis can be re-run bit-for-bit on the same inputs or pointed at
new ones.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import PipelineError, RegistryError, ValidationError
from .events import SessionEvent
from .sessions import SessionStore

MANIFEST_VERSION = 1

PIPELINE_NAME_RE = re.compile(r"^[a-z][a-z0-9_-]*$")
_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

PARAM_TYPES = ("string", "path", "number", "integer", "boolean")


@dataclass
class PipelineParam:
    name: str
    type: str = "string"
    description: str = ""
    default: Any = None
    has_default: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "type": self.type,
            "description": self.description,
        }
        if self.has_default:
            out["default"] = self.default
        return out


@dataclass
class PipelineStep:
    kind: str  # "tool_call" | "script"
    tool: str | None = None
    arguments: dict[str, Any] = field(default_factory=dict)
    profile: str = "python3"
    source: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "tool_call":
            return {"kind": "tool_call", "tool": self.tool, "arguments": self.arguments}
        return {
            "kind": "script",
            "profile": self.profile,
            "source": self.source,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
        }


@dataclass
class PipelineManifest:
    name: str
    description: str = ""
    params: list[PipelineParam] = field(default_factory=list)
    steps: list[PipelineStep] = field(default_factory=list)

    def validate(self) -> None:
        if not PIPELINE_NAME_RE.match(self.name):
            raise ValidationError(f"bad pipeline name {self.name!r}")
        if not self.steps:
            raise ValidationError(f"pipeline {self.name!r} has no steps")
        seen = set()
        for p in self.params:
            if not re.match(r"^[a-z_][a-z0-9_]*$", p.name):
                raise ValidationError(f"bad parameter name {p.name!r}")
            if p.type not in PARAM_TYPES:
                raise ValidationError(f"parameter {p.name!r} has unknown type {p.type!r}")
            if p.name in seen:
                raise ValidationError(f"parameter {p.name!r} declared twice")
            seen.add(p.name)
        for i, step in enumerate(self.steps, start=1):
            if step.kind == "tool_call":
                if not step.tool:
                    raise ValidationError(f"step {i} names no tool")
            elif step.kind == "script":
                if not step.source.strip():
                    raise ValidationError(f"step {i} has an empty script")
            else:
                raise ValidationError(f"step {i} has unknown kind {step.kind!r}")
        undeclared = self.placeholders() - seen
        if undeclared:
            raise ValidationError(
                f"pipeline {self.name!r} uses undeclared parameters: {sorted(undeclared)}"
            )

    def placeholders(self) -> set[str]:
        found: set[str] = set()

        def walk(value: Any) -> None:
            if isinstance(value, str):
                found.update(_PLACEHOLDER_RE.findall(value))
            elif isinstance(value, dict):
                for v in value.values():
                    walk(v)
            elif isinstance(value, list):
                for v in value:
                    walk(v)

        for step in self.steps:
            walk(step.arguments)
            walk(step.source)
        return found

    def to_json(self) -> str:
        doc = {
            "manifest_version": MANIFEST_VERSION,
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "steps": [s.to_dict() for s in self.steps],
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineManifest":
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("manifest_version") != MANIFEST_VERSION:
            raise ValidationError(
                f"manifest_version must be {MANIFEST_VERSION}, got {doc.get('manifest_version')!r}"
            )
        params = []
        for raw in doc.get("params", []):
            params.append(
                PipelineParam(
                    name=str(raw["name"]),
                    type=str(raw.get("type", "string")),
                    description=str(raw.get("description", "")),
                    default=raw.get("default"),
                    has_default="default" in raw,
                )
            )
        steps = []
        for raw in doc.get("steps", []):
            if raw.get("kind") == "tool_call":
                steps.append(
                    PipelineStep(
                        kind="tool_call",
                        tool=str(raw.get("tool") or ""),
                        arguments=dict(raw.get("arguments", {})),
                    )
                )
            else:
                steps.append(
                    PipelineStep(
                        kind=str(raw.get("kind", "")),
                        profile=str(raw.get("profile", "python3")),
                        source=str(raw.get("source", "")),
                        inputs=[str(x) for x in raw.get("inputs", [])],
                        outputs=[str(x) for x in raw.get("outputs", [])],
                    )
                )
        manifest = cls(
            name=str(doc.get("name", "")),
            description=str(doc.get("description", "")),
            params=params,
            steps=steps,
        )
        manifest.validate()
        return manifest

    def info(self) -> dict[str, Any]:
        """Summary used by the pipeline-info tool and the CLI listing."""
        return {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "steps": [
                {"kind": s.kind, "tool": s.tool}
                if s.kind == "tool_call"
                else {"kind": s.kind, "outputs": list(s.outputs)}
                for s in self.steps
            ],
        }


class PipelineZoo:
    """A directory of ``{name}.json`` manifests."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        if not PIPELINE_NAME_RE.match(name):
            raise ValidationError(f"bad pipeline name {name!r}")
        return self.root / f"{name}.json"

    def names(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def __contains__(self, name: str) -> bool:
        try:
            return self.path(name).is_file()
        except ValidationError:
            return False

    def save(self, manifest: PipelineManifest, overwrite: bool = False) -> Path:
        manifest.validate()
        target = self.path(manifest.name)
        if target.exists() and not overwrite:
            raise RegistryError(f"pipeline {manifest.name!r} already exists")
        target.write_text(manifest.to_json(), encoding="utf-8")
        return target

    def get(self, name: str) -> PipelineManifest:
        target = self.path(name)
        if not target.is_file():
            raise RegistryError(f"unknown pipeline {name!r}")
        return PipelineManifest.from_json(target.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Summarisation


@dataclass
class ParamBinding:
    """A literal from the recorded session to lift into a parameter."""

    name: str
    literal: Any
    description: str = ""
    type: str | None = None

    def inferred_type(self) -> str:
        if self.type is not None:
            return self.type
        if isinstance(self.literal, bool):
            return "boolean"
        if isinstance(self.literal, int):
            return "integer"
        if isinstance(self.literal, float):
            return "number"
        return "string"


def _placeholder(name: str) -> str:
    return "${" + name + "}"


def _bind_in_value(value: Any, binding: ParamBinding) -> tuple[Any, int]:
    ph = _placeholder(binding.name)
    lit = binding.literal
    if isinstance(value, dict):
        count = 0
        out = {}
        for k, v in value.items():
            out[k], c = _bind_in_value(v, binding)
            count += c
        return out, count
    if isinstance(value, list):
        count = 0
        items = []
        for v in value:
            item, c = _bind_in_value(v, binding)
            items.append(item)
            count += c
        return items, count
    if isinstance(lit, str) and isinstance(value, str):
        if lit and lit in value:
            return value.replace(lit, ph), value.count(lit)
        return value, 0
    if isinstance(lit, bool) or isinstance(value, bool):
        if isinstance(lit, bool) and isinstance(value, bool) and lit == value:
            return ph, 1
        return value, 0
    if isinstance(lit, (int, float)) and isinstance(value, (int, float)) and value == lit:
        return ph, 1
    return value, 0


def _bind_in_source(source: str, binding: ParamBinding) -> tuple[str, int]:
    ph = _placeholder(binding.name)
    lit = binding.literal
    if isinstance(lit, bool):
        return source, 0
    if isinstance(lit, str):
        if lit and lit in source:
            return source.replace(lit, ph), source.count(lit)
        return source, 0
    token = re.escape(json.dumps(lit))
    pattern = re.compile(r"(?<![\w.])" + token + r"(?![\w.])")
    replaced, count = pattern.subn(ph, source)
    return replaced, count


def _result_payload(store: SessionStore, session_id: str, event: SessionEvent) -> dict[str, Any]:
    payload = event.payload
    spilled = payload.get("spilled_to")
    if spilled:
        target = store.artifact_path(session_id, str(spilled))
        try:
            return json.loads(target.read_text())
        except (OSError, ValueError):
            return {}
    result = payload.get("result")
    return result if isinstance(result, dict) else {}


def summarise_pipeline(
    store: SessionStore,
    session_id: str,
    name: str,
    zoo: PipelineZoo,
    parameterize: Sequence[ParamBinding] = (),
    description: str = "",
    upto_seq: int | None = None,
) -> PipelineManifest:
    """Build and register a manifest from a successfully terminated session.

    Only tool calls whose result status is ok contribute steps; a result that
    carries a ``script`` field becomes a script step with the verbatim source,
    anything else a tool_call step with the originally proposed arguments.
    ``upto_seq`` limits the transcript to events before that sequence number,
    which lets a later run of the same session summarise the earlier ones.
    """
    if name in zoo:
        raise RegistryError(f"pipeline {name!r} already exists")
    events = store.events(session_id)
    if upto_seq is not None:
        events = [e for e in events if e.seq < upto_seq]
    if not events:
        raise PipelineError(f"session {session_id} has no events")
    if events[-1].kind != "terminated":
        raise PipelineError(
            f"session {session_id} did not terminate successfully "
            f"(last event: {events[-1].kind})"
        )

    proposed: dict[str, dict[str, Any]] = {}
    steps: list[PipelineStep] = []
    for event in events:
        if event.kind == "tool_call_proposed":
            proposed[str(event.payload.get("call_id"))] = event.payload
        elif event.kind == "tool_result" and event.payload.get("status") == "ok":
            call = proposed.get(str(event.payload.get("call_id")))
            if call is None:
                continue
            result = _result_payload(store, session_id, event)
            script = result.get("script")
            if isinstance(script, str) and script.strip():
                steps.append(
                    PipelineStep(
                        kind="script",
                        profile=str(result.get("profile", "python3")),
                        source=script,
                        inputs=[str(x) for x in result.get("inputs", [])],
                        outputs=[str(x) for x in result.get("artifacts", [])],
                    )
                )
            else:
                steps.append(
                    PipelineStep(
                        kind="tool_call",
                        tool=str(call.get("tool")),
                        arguments=dict(call.get("arguments", {})),
                    )
                )
    if not steps:
        raise PipelineError(f"session {session_id} has no successful tool calls to record")

    params: list[PipelineParam] = []
    for binding in parameterize:
        total = 0
        for step in steps:
            if step.kind == "tool_call":
                step.arguments, count = _bind_in_value(step.arguments, binding)
            else:
                step.source, count = _bind_in_source(step.source, binding)
            total += count
        if total == 0:
            raise PipelineError(
                f"binding {binding.name!r}: literal {binding.literal!r} "
                "does not occur in any step"
            )
        params.append(
            PipelineParam(
                name=binding.name,
                type=binding.inferred_type(),
                description=binding.description,
                default=binding.literal,
                has_default=True,
            )
        )

    manifest = PipelineManifest(name=name, description=description, params=params, steps=steps)
    manifest.validate()
    zoo.save(manifest)
    return manifest


# ---------------------------------------------------------------------------
# Replay


@dataclass
class StepResult:
    index: int
    kind: str
    tool: str | None
    status: str  # "ok" | "error" | "skipped"
    detail: str = ""
    artifacts: list[str] = field(default_factory=list)


@dataclass
class PipelineRunReport:
    pipeline: str
    steps: list[StepResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s.status == "ok" for s in self.steps)

    @property
    def failed_step(self) -> StepResult | None:
        return next((s for s in self.steps if s.status == "error"), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pipeline": self.pipeline,
            "ok": self.ok,
            "steps": [
                {
                    "index": s.index,
                    "kind": s.kind,
                    "tool": s.tool,
                    "status": s.status,
                    "detail": s.detail,
                    "artifacts": list(s.artifacts),
                }
                for s in self.steps
            ],
        }


def resolve_arguments(manifest: PipelineManifest, arguments: dict[str, Any]) -> dict[str, Any]:
    """Merge call arguments with declared defaults; missing ones are an error."""
    declared = {p.name for p in manifest.params}
    unknown = sorted(set(arguments) - declared)
    if unknown:
        raise PipelineError(f"unknown pipeline parameters: {unknown}")
    values: dict[str, Any] = {}
    missing = []
    for p in manifest.params:
        if p.name in arguments:
            values[p.name] = arguments[p.name]
        elif p.has_default:
            values[p.name] = p.default
        else:
            missing.append(p.name)
    if missing:
        raise PipelineError(f"missing required pipeline parameters: {missing}")
    return values


def _substitute(value: Any, values: dict[str, Any]) -> Any:
    if isinstance(value, dict):
        return {k: _substitute(v, values) for k, v in value.items()}
    if isinstance(value, list):
        return [_substitute(v, values) for v in value]
    if isinstance(value, str):
        whole = _PLACEHOLDER_RE.fullmatch(value)
        if whole:
            return values[whole.group(1)]
        return _PLACEHOLDER_RE.sub(lambda m: str(values[m.group(1)]), value)
    return value


def resolved_steps(
    manifest: PipelineManifest, arguments: dict[str, Any]
) -> list[PipelineStep]:
    """Steps with every placeholder replaced by its bound value."""
    values = resolve_arguments(manifest, arguments)
    out = []
    for step in manifest.steps:
        if step.kind == "tool_call":
            out.append(
                PipelineStep(
                    kind="tool_call",
                    tool=step.tool,
                    arguments=_substitute(step.arguments, values),
                )
            )
        else:
            out.append(
                PipelineStep(
                    kind="script",
                    profile=step.profile,
                    source=_substitute(step.source, values),
                    inputs=[_substitute(x, values) for x in step.inputs],
                    outputs=[_substitute(x, values) for x in step.outputs],
                )
            )
    return out


RunTool = Callable[[str, dict[str, Any]], dict[str, Any]]
RunScript = Callable[[str, str], dict[str, Any]]


def replay_pipeline(
    manifest: PipelineManifest,
    arguments: dict[str, Any],
    run_tool: RunTool,
    run_script: RunScript,
) -> PipelineRunReport:
    """Execute a manifest's steps in order, stopping at the first failure.

    ``run_tool(name, args)`` must raise ``RegistryError`` for an unregistered
    tool and return the result record otherwise; ``run_script(source,
    profile)`` returns ``{"ok": bool, "detail": str, "artifacts": [...]}``.
    Parameters are checked before anything executes.
    """
    steps = resolved_steps(manifest, arguments)
    report = PipelineRunReport(pipeline=manifest.name)
    failed = False
    for i, step in enumerate(steps, start=1):
        if failed:
            report.steps.append(
                StepResult(index=i, kind=step.kind, tool=step.tool, status="skipped")
            )
            continue
        if step.kind == "tool_call":
            try:
                result = run_tool(step.tool or "", step.arguments)
                artifacts = result.get("artifacts", []) if isinstance(result, dict) else []
                report.steps.append(
                    StepResult(
                        index=i,
                        kind="tool_call",
                        tool=step.tool,
                        status="ok",
                        artifacts=[str(a) for a in artifacts],
                    )
                )
            except Exception as exc:
                failed = True
                report.steps.append(
                    StepResult(
                        index=i, kind="tool_call", tool=step.tool, status="error", detail=str(exc)
                    )
                )
        else:
            outcome = run_script(step.source, step.profile)
            if outcome.get("ok"):
                report.steps.append(
                    StepResult(
                        index=i,
                        kind="script",
                        tool=None,
                        status="ok",
                        artifacts=[str(a) for a in outcome.get("artifacts", [])],
                    )
                )
            else:
                failed = True
                report.steps.append(
                    StepResult(
                        index=i,
                        kind="script",
                        tool=None,
                        status="error",
                        detail=str(outcome.get("detail", "script failed")),
                    )
                )
    return report


def render_script(manifest: PipelineManifest) -> str:
    """Human-readable rendering of a manifest as a commented script outline."""
    lines = [f"# pipeline: {manifest.name}"]
    if manifest.description:
        lines.append(f"# {manifest.description}")
    if manifest.params:
        lines.append("# parameters:")
        for p in manifest.params:
            default = f" = {p.default!r}" if p.has_default else ""
            lines.append(f"#   {p.name}: {p.type}{default}  {p.description}".rstrip())
    for i, step in enumerate(manifest.steps, start=1):
        lines.append("")
        if step.kind == "tool_call":
            args = ", ".join(f"{k}={v!r}" for k, v in step.arguments.items())
            lines.append(f"# step {i}")
            lines.append(f"{step.tool}({args})")
        else:
            lines.append(f"# step {i}: script ({step.profile})")
            lines.append(step.source.rstrip())
    return "\n".join(lines) + "\n"
