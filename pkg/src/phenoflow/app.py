"""Wires the pieces into a workbench: config, providers, adapters, sessions.

The config format is plain KEY=VALUE text. Values may reference environment
variables as ${NAME}; secrets therefore stay out of the file and out of the
transcripts. Unknown keys are rejected so typos surface early.
"""
from __future__ import annotations

import json
import os
import re
import shlex
from pathlib import Path
from typing import Any

from . import pipelines
from .errors import (
    PipelineError,
    ProviderError,
    RegistryError,
    SandboxViolation,
    ValidationError,
)
from .llm import ChatProvider, HashEmbedder, HttpChatProvider, ProviderConfig, ReplayProvider
from .manager import DEFAULT_MAX_TURNS, ApprovalPolicy, Manager
from .pipelines import PipelineManifest, PipelineZoo
from .rag import RagStore
from .sandbox import InterpreterProfile
from .sessions import SessionStore
from .toolkit import ToolContext, register_builtin_tools, script_runner
from .tools import ModelZoo, ToolRegistry
from .vision import (
    AdapterClient,
    HttpTransport,
    InProcessTransport,
    StubVisionAdapter,
    SubprocessTransport,
    VisionJobs,
)

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

CONFIG_DEFAULTS: dict[str, str] = {
    "store_root": "./phenoflow_data/sessions",
    "pipeline_dir": "./phenoflow_data/pipelines",
    "model_zoo": "",
    "provider": "none",  # none | replay | http
    "replay_file": "",
    "provider_base_url": "",
    "provider_model": "",
    "credential_env": "PHENOFLOW_API_KEY",
    "adapter": "stub",  # stub | subprocess | http | none
    "adapter_cmd": "",
    "adapter_url": "",
    "approval_mode": "gated",  # gated | auto
    "max_turns": str(DEFAULT_MAX_TURNS),
    "script_timeout_s": "",
    "prompt_dir": "",
    "bearer_token": "",
}


def _interpolate(value: str) -> str:
    def sub(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in os.environ:
            raise ValidationError(f"config references unset environment variable {name!r}")
        return os.environ[name]

    return _ENV_RE.sub(sub, value)


def load_config(
    path: str | Path | None = None, overrides: dict[str, str] | None = None
) -> dict[str, str]:
    """Defaults, then the config file, then explicit overrides."""
    config = dict(CONFIG_DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file not found: {p}")
        for lineno, line in enumerate(p.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{p}:{lineno}: expected KEY=VALUE, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key not in CONFIG_DEFAULTS:
                raise ValidationError(f"{p}:{lineno}: unknown config key {key!r}")
            config[key] = _interpolate(value.strip())
    for key, value in (overrides or {}).items():
        key = key.lower()
        if key not in CONFIG_DEFAULTS:
            raise ValidationError(f"unknown config key {key!r}")
        config[key] = value
    return config


def _build_provider(config: dict[str, str]) -> ChatProvider | None:
    kind = config["provider"]
    if kind == "none":
        return None
    if kind == "replay":
        if not config["replay_file"]:
            raise ValidationError("provider=replay needs replay_file")
        return ReplayProvider.from_file(config["replay_file"])
    if kind == "http":
        if not config["provider_base_url"]:
            raise ValidationError("provider=http needs provider_base_url")
        return HttpChatProvider(
            ProviderConfig(
                base_url=config["provider_base_url"],
                model=config["provider_model"] or "default",
                credential_env=config["credential_env"],
            )
        )
    raise ValidationError(f"unknown provider kind {kind!r}")


class Workbench:
    """One configured installation: stores, zoos, provider, adapter, manager."""

    def __init__(self, config: dict[str, str] | None = None):
        self.config = {**CONFIG_DEFAULTS, **(config or {})}
        self.store = SessionStore(self.config["store_root"])
        self.registry = register_builtin_tools(ToolRegistry())
        self.pipeline_zoo = PipelineZoo(self.config["pipeline_dir"])
        zoo_path = self.config["model_zoo"]
        if zoo_path and Path(zoo_path).is_file():
            self.model_zoo = ModelZoo.load(zoo_path)
        else:
            self.model_zoo = ModelZoo()
        self.provider = _build_provider(self.config)
        self.rag = RagStore(HashEmbedder())
        self.profile = InterpreterProfile()
        if self.config["script_timeout_s"]:
            self.profile.timeout_s = float(self.config["script_timeout_s"])
        self._transport = None
        self.vision = self._build_vision()
        mode = self.config["approval_mode"]
        if mode not in ("gated", "auto"):
            raise ValidationError(f"unknown approval_mode {mode!r}")
        self.manager = Manager(
            self.store,
            self.registry,
            self.provider,
            policy=ApprovalPolicy(mode=mode),
            prompt_dir=self.config["prompt_dir"] or None,
            max_turns=int(self.config["max_turns"]),
        )

    def _build_vision(self) -> VisionJobs | None:
        kind = self.config["adapter"]
        if kind == "none":
            return None
        if kind == "stub":
            self._transport = InProcessTransport(StubVisionAdapter())
        elif kind == "subprocess":
            if not self.config["adapter_cmd"]:
                raise ValidationError("adapter=subprocess needs adapter_cmd")
            self._transport = SubprocessTransport(shlex.split(self.config["adapter_cmd"]))
        elif kind == "http":
            if not self.config["adapter_url"]:
                raise ValidationError("adapter=http needs adapter_url")
            self._transport = HttpTransport(self.config["adapter_url"])
        else:
            raise ValidationError(f"unknown adapter kind {kind!r}")
        return VisionJobs(AdapterClient(self._transport), self.model_zoo)

    # -- sessions -----------------------------------------------------------

    def create_session(self) -> str:
        return self.store.create_session(self.config)

    def context(self, session_id: str) -> ToolContext:
        return ToolContext(
            store=self.store,
            session_id=session_id,
            registry=self.registry,
            model_zoo=self.model_zoo,
            pipeline_zoo=self.pipeline_zoo,
            provider=self.provider,
            vision=self.vision,
            rag=self.rag,
            profile=self.profile,
        )

    def send_message(self, session_id: str, text: str) -> str:
        if self.provider is None:
            raise ProviderError(
                "no chat provider is configured; set provider=replay or provider=http"
            )
        return self.manager.run(session_id, text, self.context(session_id))

    def resolve_approval(
        self, session_id: str, call_id: str, approve: bool, note: str = ""
    ) -> str:
        return self.manager.resolve_approval(session_id, call_id, approve, note=note)

    # -- pipeline replay ------------------------------------------------------

    def replay_pipeline(
        self,
        name: str,
        arguments: dict[str, Any] | None = None,
        session_id: str | None = None,
    ) -> tuple[str, pipelines.PipelineRunReport]:
        """Execute a saved pipeline as a session run; no provider involved.

        Parameters are checked before any session state is touched. Steps emit
        the same events a live run would, so the transcript can itself be
        summarised back into a pipeline.
        """
        manifest = self.pipeline_zoo.get(name)
        values = pipelines.resolve_arguments(manifest, arguments or {})
        sid = session_id or self.create_session()
        ctx = self.context(sid)
        store = self.store
        store.append_event(
            sid,
            "user_message",
            {"text": f"Replay pipeline {name!r} with arguments "
                     f"{json.dumps(values, sort_keys=True)}"},
        )
        store.append_event(
            sid,
            "plan",
            {"text": f"Execute the {len(manifest.steps)} stored steps of "
                     f"pipeline {name!r} in order."},
        )
        store.set_status(sid, "running")

        counter = {"n": 0}
        run_scripts = script_runner(ctx)

        def next_call_id() -> str:
            counter["n"] += 1
            return f"step-{counter['n']}"

        def emit_result_ok(call_id: str, tool: str, result: dict[str, Any]) -> None:
            store.append_event(
                sid,
                "tool_result",
                {"call_id": call_id, "tool": tool, "status": "ok", "result": result},
            )
            for rel in result.get("artifacts", []) or []:
                if isinstance(rel, str):
                    store.record_artifact(sid, store.artifacts_dir(sid) / rel)

        def emit_result_error(call_id: str, tool: str, message: str) -> None:
            store.append_event(
                sid,
                "tool_result",
                {"call_id": call_id, "tool": tool, "status": "error", "error": message},
            )

        def run_tool(tool: str, arguments: dict[str, Any]) -> dict[str, Any]:
            call_id = next_call_id()
            store.append_event(
                sid,
                "tool_call_proposed",
                {"call_id": call_id, "tool": tool, "arguments": arguments,
                 "approval_required": False},
            )
            try:
                handler = ctx.registry.handler(tool)
            except RegistryError as exc:
                emit_result_error(call_id, tool, str(exc))
                raise
            store.append_event(
                sid, "tool_call_started", {"call_id": call_id, "tool": tool}
            )
            try:
                result = handler(arguments, ctx)
            except Exception as exc:
                emit_result_error(call_id, tool, str(exc) or type(exc).__name__)
                raise
            emit_result_ok(call_id, tool, result)
            return result

        def run_script(source: str, profile: str) -> dict[str, Any]:
            call_id = next_call_id()
            store.append_event(
                sid,
                "tool_call_proposed",
                {"call_id": call_id, "tool": "coding",
                 "arguments": {"message": f"stored pipeline script ({profile})"},
                 "approval_required": False},
            )
            store.append_event(
                sid, "tool_call_started", {"call_id": call_id, "tool": "coding"}
            )
            try:
                outcome = run_scripts(source, profile)
            except SandboxViolation as exc:
                emit_result_error(call_id, "coding", f"sandbox violation: {exc}")
                raise
            except PipelineError as exc:
                emit_result_error(call_id, "coding", str(exc))
                raise
            if outcome.get("ok"):
                emit_result_ok(
                    call_id,
                    "coding",
                    {"success": True, "script": source, "profile": profile,
                     "artifacts": outcome.get("artifacts", [])},
                )
            else:
                emit_result_error(call_id, "coding", str(outcome.get("detail", "script failed")))
            return outcome

        try:
            report = pipelines.replay_pipeline(manifest, values, run_tool, run_script)
        except Exception as exc:
            store.append_event(sid, "error", {"message": str(exc) or type(exc).__name__})
            store.set_status(sid, "failed")
            raise
        if report.ok:
            store.append_event(
                sid,
                "summary",
                {"text": f"Pipeline {name!r} completed all {len(report.steps)} steps."},
            )
            store.append_event(sid, "terminated", {"reason": "completed"})
            store.set_status(sid, "terminated")
        else:
            failed = report.failed_step
            detail = f"step {failed.index}: {failed.detail}" if failed else "unknown step"
            store.append_event(
                sid, "error", {"message": f"pipeline {name!r} failed at {detail}"}
            )
            store.set_status(sid, "failed")
        return sid, report

    def save_pipeline(
        self,
        session_id: str,
        name: str,
        parameterize: dict[str, Any] | None = None,
        description: str = "",
    ) -> PipelineManifest:
        bindings = [
            pipelines.ParamBinding(name=k, literal=v)
            for k, v in (parameterize or {}).items()
        ]
        return pipelines.summarise_pipeline(
            self.store,
            session_id,
            name,
            self.pipeline_zoo,
            parameterize=bindings,
            description=description,
        )

    def close(self) -> None:
        transport = self._transport
        if transport is not None and hasattr(transport, "close"):
            transport.close()

    def __enter__(self) -> "Workbench":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()
