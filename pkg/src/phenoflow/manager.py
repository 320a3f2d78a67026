"""The conversation loop: provider turns, tool dispatch, approvals, transcripts.

One run handles a single user message and keeps calling the provider until it
replies with the terminate token, the turn budget runs out, or something
fails. Every step lands in the session event log; large tool results are
spilled to the artifacts directory and only referenced from the transcript.

Approval is cooperative: when a gated call comes up the run parks itself and
returns, and resolve_approval picks it back up on the caller's thread.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .errors import ProviderError, SandboxViolation, SessionStateError
from .llm import ChatMessage, ChatProvider, ToolCall, strip_terminate, validate_tool_calls
from .prompts import load_prompt
from .sessions import SessionStore
from .toolkit import ToolContext
from .tools import ToolRegistry

DEFAULT_MAX_TURNS = 24
SPILL_BYTES = 8 * 1024
_PREVIEW_CHARS = 500


@dataclass
class ApprovalPolicy:
    """Which tool calls pause for a human decision.

    In gated mode a spec's approval_required flag decides, subject to
    per-tool overrides; auto mode approves everything, which is what replays
    and evals run under.
    """

    mode: str = "gated"
    overrides: dict[str, bool] = field(default_factory=dict)

    def requires(self, registry: ToolRegistry, tool_name: str) -> bool:
        if self.mode == "auto" or tool_name not in registry:
            return False
        return self.overrides.get(tool_name, registry.get(tool_name).approval_required)


@dataclass
class _RunState:
    context: ToolContext
    messages: list[ChatMessage]
    queue: deque[ToolCall] = field(default_factory=deque)
    turns: int = 0
    plan_emitted: bool = False
    waiting: ToolCall | None = None
    decision: bool | None = None
    decision_note: str = ""
    pending_summary: str | None = None


class Manager:
    """Drives sessions against a chat provider and the tool registry."""

    def __init__(
        self,
        store: SessionStore,
        registry: ToolRegistry,
        provider: ChatProvider,
        policy: ApprovalPolicy | None = None,
        prompt_dir: str | None = None,
        max_turns: int = DEFAULT_MAX_TURNS,
        spill_bytes: int = SPILL_BYTES,
    ):
        self.store = store
        self.registry = registry
        self.provider = provider
        self.policy = policy or ApprovalPolicy()
        self.prompt_dir = prompt_dir
        self.max_turns = max_turns
        self.spill_bytes = spill_bytes
        self._states: dict[str, _RunState] = {}

    # -- public entry points -------------------------------------------------

    def run(self, session_id: str, text: str, context: ToolContext) -> str:
        """Process one user message; returns the session status afterwards."""
        if session_id in self._states:
            raise SessionStateError(f"session {session_id} already has a run in flight")
        if not isinstance(text, str) or not text.strip():
            raise SessionStateError("user message must be non-empty")
        event = self.store.append_event(session_id, "user_message", {"text": text})
        context.run_start_seq = event.seq
        state = _RunState(
            context=context,
            messages=[
                ChatMessage(role="system", content=load_prompt("manager", self.prompt_dir)),
                ChatMessage(role="user", content=text),
            ],
        )
        self._states[session_id] = state
        self.store.set_status(session_id, "running")
        return self._drive(session_id)

    def resolve_approval(
        self, session_id: str, call_id: str, approve: bool, note: str = ""
    ) -> str:
        """Record the decision for the pending call and resume the run."""
        state = self._states.get(session_id)
        if state is None or state.waiting is None:
            raise SessionStateError(f"session {session_id} is not awaiting approval")
        if state.waiting.id != call_id:
            raise SessionStateError(
                f"call {call_id!r} is not awaiting approval (pending: {state.waiting.id!r})"
            )
        self.store.append_event(
            session_id,
            "approval_resolved",
            {"call_id": call_id, "approved": bool(approve), "note": note},
        )
        state.decision = bool(approve)
        state.decision_note = note
        self.store.set_status(session_id, "running")
        return self._drive(session_id)

    def pending_approval(self, session_id: str) -> ToolCall | None:
        state = self._states.get(session_id)
        return state.waiting if state else None

    # -- the loop --------------------------------------------------------------

    def _drive(self, session_id: str) -> str:
        state = self._states[session_id]
        while True:
            try:
                paused = self._process_calls(session_id, state)
            except SandboxViolation as exc:
                return self._fail(session_id, f"sandbox violation: {exc}")
            if paused:
                self.store.set_status(session_id, "awaiting_approval")
                return "awaiting_approval"
            if state.pending_summary is not None:
                return self._finish(session_id, state.pending_summary)
            if state.turns >= self.max_turns:
                return self._fail(
                    session_id,
                    f"run exceeded {self.max_turns} provider turns without terminating",
                )
            try:
                turn = self.provider.chat(state.messages, tools=self.registry.list_tools())
            except ProviderError as exc:
                return self._fail(session_id, str(exc))
            state.turns += 1
            validate_tool_calls(turn, self.registry.list_tools())
            text = (turn.text or "").strip()
            display = strip_terminate(text) if turn.terminates else text
            state.messages.append(
                ChatMessage(role="assistant", content=turn.text, tool_calls=turn.tool_calls)
            )
            if turn.tool_calls:
                if not state.plan_emitted:
                    self.store.append_event(session_id, "plan", {"text": display})
                    state.plan_emitted = True
                elif display and not turn.terminates:
                    self.store.append_event(session_id, "assistant_message", {"text": display})
                state.queue.extend(turn.tool_calls)
                state.pending_summary = display if turn.terminates else None
                continue
            if turn.terminates:
                return self._finish(session_id, display)
            if display:
                kind = "assistant_message" if state.plan_emitted else "plan"
                self.store.append_event(session_id, kind, {"text": display})
                state.plan_emitted = True
            state.messages.append(
                ChatMessage(
                    role="user",
                    content="Continue; reply with TERMINATE once everything is done.",
                )
            )

    def _process_calls(self, session_id: str, state: _RunState) -> bool:
        """Work through queued calls; True means parked on an approval."""
        while state.queue:
            call = state.queue[0]
            if state.waiting is not None:
                approved = bool(state.decision)
                note = state.decision_note
                state.waiting = None
                state.decision = None
                state.decision_note = ""
                if not approved:
                    message = "call rejected by the user"
                    if note:
                        message = f"{message}: {note}"
                    self._emit_error_result(session_id, state, call, message)
                    state.queue.popleft()
                    continue
                self._execute(session_id, state, call)
                state.queue.popleft()
                continue
            needs_approval = self.policy.requires(self.registry, call.name)
            self.store.append_event(
                session_id,
                "tool_call_proposed",
                {
                    "call_id": call.id,
                    "tool": call.name,
                    "arguments": call.arguments,
                    "approval_required": needs_approval,
                },
            )
            if call.validation_error:
                self._emit_error_result(session_id, state, call, call.validation_error)
                state.queue.popleft()
                continue
            if needs_approval:
                self.store.append_event(
                    session_id, "approval_requested", {"call_id": call.id, "tool": call.name}
                )
                state.waiting = call
                return True
            self._execute(session_id, state, call)
            state.queue.popleft()
        return False

    def _execute(self, session_id: str, state: _RunState, call: ToolCall) -> None:
        self.store.append_event(
            session_id, "tool_call_started", {"call_id": call.id, "tool": call.name}
        )
        try:
            handler = self.registry.handler(call.name)
            result = handler(call.arguments, state.context)
            if not isinstance(result, dict):
                result = {"value": result}
        except SandboxViolation as exc:
            self._emit_error_result(session_id, state, call, f"sandbox violation: {exc}")
            raise
        except Exception as exc:  # the model sees the failure and can retry
            detail = str(exc).strip() or type(exc).__name__
            self._emit_error_result(session_id, state, call, detail)
            return

        serial = json.dumps(result, ensure_ascii=False, default=str)
        payload = {"call_id": call.id, "tool": call.name, "status": "ok"}
        if len(serial.encode("utf-8")) > self.spill_bytes:
            rel = f"tool_result_{call.id}.json"
            spill = self.store.artifact_path(session_id, rel)
            spill.write_text(serial)
            payload["spilled_to"] = rel
            payload["result"] = {"preview": serial[:_PREVIEW_CHARS]}
            content = f"(full result stored at {rel}) {serial[:_PREVIEW_CHARS]}"
        else:
            payload["result"] = result
            content = serial
        self.store.append_event(session_id, "tool_result", payload)
        for rel in result.get("artifacts", []) or []:
            if isinstance(rel, str):
                self.store.record_artifact(
                    session_id, self.store.artifacts_dir(session_id) / rel
                )
        state.messages.append(
            ChatMessage(role="tool", content=content, tool_call_id=call.id)
        )

    def _emit_error_result(
        self, session_id: str, state: _RunState, call: ToolCall, message: str
    ) -> None:
        self.store.append_event(
            session_id,
            "tool_result",
            {"call_id": call.id, "tool": call.name, "status": "error", "error": message},
        )
        state.messages.append(
            ChatMessage(
                role="tool",
                content=json.dumps({"status": "error", "error": message}),
                tool_call_id=call.id,
            )
        )

    def _finish(self, session_id: str, summary: str) -> str:
        self.store.append_event(session_id, "summary", {"text": summary})
        self.store.append_event(session_id, "terminated", {"reason": "completed"})
        self.store.set_status(session_id, "terminated")
        self._states.pop(session_id, None)
        return "terminated"

    def _fail(self, session_id: str, message: str) -> str:
        self.store.append_event(session_id, "error", {"message": message})
        self.store.set_status(session_id, "failed")
        self._states.pop(session_id, None)
        return "failed"
