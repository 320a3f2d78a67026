"""Chat and embedding providers behind one small interface.

The HTTP provider speaks the common chat-completions JSON shape; the replay
provider feeds pre-recorded assistant turns to keep runs deterministic and
offline. Tool-call arguments are validated against the registered specs and
validation failures are reported on the turn instead of raised, so the
conversation loop can feed them back to the model.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import ProviderError, ReplayExhaustedError
from .tools import ToolSpec

log = logging.getLogger(__name__)

TERMINATE_TOKEN = "TERMINATE"

_TERMINATE_RE = re.compile(r"(?:^|\s)[\"']?" + TERMINATE_TOKEN + r"[\"']?[.!]?(?:\s|$)")


def has_terminate(text: str | None) -> bool:
    """True when the text carries the terminate token as a standalone word."""
    if not text:
        return False
    return bool(_TERMINATE_RE.search(text))


def strip_terminate(text: str) -> str:
    return _TERMINATE_RE.sub(" ", text).strip()


@dataclass
class ProviderConfig:
    base_url: str = ""
    model: str = ""
    credential_env: str = "PHENOFLOW_API_KEY"
    temperature: float = 0.0
    max_tokens: int | None = None
    timeout_s: float = 60.0


@dataclass
class ChatMessage:
    role: str
    content: str | None = None
    attachments: list[str] = field(default_factory=list)
    tool_call_id: str | None = None
    tool_calls: list["ToolCall"] | None = None


@dataclass
class ToolCall:
    id: str
    name: str
    arguments: dict[str, Any]
    validation_error: str | None = None


@dataclass
class AssistantTurn:
    text: str | None
    tool_calls: list[ToolCall] = field(default_factory=list)
    finish_reason: str = "stop"

    @property
    def terminates(self) -> bool:
        return has_terminate(self.text)


class ChatProvider(Protocol):
    supports_vision: bool

    def chat(self, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec] = ()) -> AssistantTurn:
        ...


_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "path": lambda v: isinstance(v, str),
    "paths": lambda v: isinstance(v, str)
    or (isinstance(v, list) and all(isinstance(i, str) for i in v)),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}


def validate_tool_calls(turn: AssistantTurn, tools: Sequence[ToolSpec]) -> AssistantTurn:
    """Annotate each call with a validation error where the args break the spec."""
    by_name = {t.name: t for t in tools}
    for call in turn.tool_calls:
        spec = by_name.get(call.name)
        if spec is None:
            call.validation_error = f"unknown tool {call.name!r}"
            continue
        if not isinstance(call.arguments, dict):
            call.validation_error = "arguments must be an object"
            continue
        problems = []
        params = {p.name: p for p in spec.params}
        for pname, p in params.items():
            if p.required and pname not in call.arguments:
                problems.append(f"missing required parameter {pname!r}")
        for aname, value in call.arguments.items():
            p = params.get(aname)
            if p is None:
                problems.append(f"unknown parameter {aname!r}")
                continue
            check = _TYPE_CHECKS.get(p.type)
            if check is not None and not check(value):
                problems.append(f"parameter {aname!r} should be of type {p.type}")
        if problems:
            call.validation_error = "; ".join(problems)
    return turn


def _tool_wire_schema(spec: ToolSpec) -> dict[str, Any]:
    type_map = {
        "path": "string",
        "paths": "string",
        "string": "string",
        "number": "number",
        "integer": "integer",
        "boolean": "boolean",
        "array": "array",
        "object": "object",
    }
    properties = {}
    required = []
    for p in spec.params:
        properties[p.name] = {"type": type_map.get(p.type, "string"), "description": p.description}
        if p.required:
            required.append(p.name)
    return {
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {"type": "object", "properties": properties, "required": required},
        },
    }


def _encode_attachment(path: str) -> dict[str, Any]:
    data = Path(path).read_bytes()
    suffix = Path(path).suffix.lstrip(".").lower() or "png"
    b64 = base64.b64encode(data).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/{suffix};base64,{b64}"}}


def _message_wire(msg: ChatMessage) -> dict[str, Any]:
    out: dict[str, Any] = {"role": msg.role}
    if msg.attachments:
        parts: list[dict[str, Any]] = []
        if msg.content:
            parts.append({"type": "text", "text": msg.content})
        parts.extend(_encode_attachment(a) for a in msg.attachments)
        out["content"] = parts
    else:
        out["content"] = msg.content
    if msg.tool_call_id is not None:
        out["tool_call_id"] = msg.tool_call_id
    if msg.tool_calls:
        out["tool_calls"] = [
            {
                "id": c.id,
                "type": "function",
                "function": {"name": c.name, "arguments": json.dumps(c.arguments)},
            }
            for c in msg.tool_calls
        ]
    return out


class HttpChatProvider:
    """Chat-completions client over HTTP. The credential comes from the
    environment variable named in the config and is never stored."""

    supports_vision = True

    def __init__(self, config: ProviderConfig):
        if not config.base_url:
            raise ProviderError("provider base_url is not configured")
        self.config = config

    def _credential(self) -> str:
        value = os.environ.get(self.config.credential_env, "")
        if not value:
            raise ProviderError(
                f"credential environment variable {self.config.credential_env!r} is unset"
            )
        return value

    def chat(self, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec] = ()) -> AssistantTurn:
        import httpx

        payload: dict[str, Any] = {
            "model": self.config.model,
            "messages": [_message_wire(m) for m in messages],
            "temperature": self.config.temperature,
        }
        if self.config.max_tokens is not None:
            payload["max_tokens"] = self.config.max_tokens
        if tools:
            payload["tools"] = [_tool_wire_schema(t) for t in tools]
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self._credential()}"}
        try:
            resp = httpx.post(url, json=payload, headers=headers, timeout=self.config.timeout_s)
        except httpx.HTTPError as exc:
            raise ProviderError(f"chat request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"chat request returned {resp.status_code}: {resp.text[:500]}")
        try:
            body = resp.json()
            choice = body["choices"][0]
            message = choice["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise ProviderError(f"malformed chat response: {resp.text[:500]}") from exc
        calls = []
        for i, raw in enumerate(message.get("tool_calls") or []):
            fn = raw.get("function", {})
            args_raw = fn.get("arguments", "{}")
            try:
                args = json.loads(args_raw) if isinstance(args_raw, str) else dict(args_raw)
                err = None
            except (ValueError, TypeError):
                args = {}
                err = f"arguments are not valid JSON: {str(args_raw)[:200]}"
            calls.append(
                ToolCall(
                    id=str(raw.get("id") or f"call_{i}"),
                    name=str(fn.get("name", "")),
                    arguments=args,
                    validation_error=err,
                )
            )
        turn = AssistantTurn(
            text=message.get("content"),
            tool_calls=calls,
            finish_reason=str(choice.get("finish_reason", "stop")),
        )
        return validate_tool_calls(turn, tools)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        import httpx

        if not texts:
            return []
        if any(not t for t in texts):
            raise ProviderError("cannot embed empty text")
        url = self.config.base_url.rstrip("/") + "/embeddings"
        headers = {"Authorization": f"Bearer {self._credential()}"}
        try:
            resp = httpx.post(
                url,
                json={"model": self.config.model, "input": list(texts)},
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"embedding request returned {resp.status_code}")
        try:
            rows = resp.json()["data"]
            vecs = [np.asarray(r["embedding"], dtype=np.float32) for r in rows]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderError("malformed embedding response") from exc
        out = []
        for v in vecs:
            v = v.astype(np.float64)
            norm = float(np.linalg.norm(v))
            if norm == 0.0:
                raise ProviderError("embedding provider returned a zero vector")
            out.append(v / norm)
        return out


class ReplayProvider:
    """Serves pre-recorded assistant turns in order; exhaustion is an error.

    The fixture is a JSON object {"turns": [...]} where each entry has
    optional "text" and "tool_calls" ([{id, name, arguments}]). One queue
    serves every chat call made during a session run, including calls made by
    nested script or visualisation agents, in execution order.
    """

    def __init__(self, turns: Sequence[dict[str, Any]], supports_vision: bool = True):
        self._turns = [self._parse(t, i) for i, t in enumerate(turns)]
        self._cursor = 0
        self.supports_vision = supports_vision
        self.call_log: list[dict[str, Any]] = []

    @classmethod
    def from_file(cls, path: str | Path, supports_vision: bool = True) -> "ReplayProvider":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ProviderError(f"cannot load replay fixture {path}: {exc}") from exc
        turns = doc.get("turns")
        if not isinstance(turns, list):
            raise ProviderError(f"replay fixture {path} must contain a 'turns' list")
        return cls(turns, supports_vision=supports_vision)

    @staticmethod
    def _parse(raw: dict[str, Any], index: int) -> AssistantTurn:
        calls = [
            ToolCall(
                id=str(c.get("id") or f"call_{index}_{j}"),
                name=str(c["name"]),
                arguments=dict(c.get("arguments", {})),
            )
            for j, c in enumerate(raw.get("tool_calls") or [])
        ]
        finish = "tool_calls" if calls else "stop"
        return AssistantTurn(text=raw.get("text"), tool_calls=calls, finish_reason=finish)

    @property
    def remaining(self) -> int:
        return len(self._turns) - self._cursor

    def chat(self, messages: Sequence[ChatMessage], tools: Sequence[ToolSpec] = ()) -> AssistantTurn:
        self.call_log.append(
            {
                "messages": len(messages),
                "last_role": messages[-1].role if messages else None,
                "tools": [t.name for t in tools],
            }
        )
        if self._cursor >= len(self._turns):
            raise ReplayExhaustedError(
                f"replay fixture exhausted after {len(self._turns)} turn(s)"
            )
        raw = self._turns[self._cursor]
        self._cursor += 1
        turn = AssistantTurn(
            text=raw.text,
            tool_calls=[ToolCall(c.id, c.name, dict(c.arguments)) for c in raw.tool_calls],
            finish_reason=raw.finish_reason,
        )
        return validate_tool_calls(turn, tools)


class HashEmbedder:
    """Deterministic bag-of-tokens embedder for offline tests.

    Tokens are hashed into a fixed number of buckets with a hash-derived sign;
    the resulting count vector is L2-normalised, so identical texts embed to
    identical unit vectors.
    """

    def __init__(self, dim: int = 256):
        if dim < 8:
            raise ValueError("embedding dimension is too small")
        self.dim = dim

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "little") % self.dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return idx, sign

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            if not text or not text.strip():
                raise ProviderError("cannot embed empty text")
            vec = np.zeros(self.dim, dtype=np.float64)
            for token in re.findall(r"[a-z0-9]+", text.lower()):
                idx, sign = self._token_slot(token)
                vec[idx] += sign
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                # text with no alphanumeric tokens: fall back to hashing whole text
                idx, sign = self._token_slot(text)
                vec[idx] = sign
                norm = 1.0
            out.append(vec / norm)
        return out
