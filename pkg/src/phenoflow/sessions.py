"""Session persistence: append-only event logs plus an artifacts directory.

Layout under the store root:

    {root}/{session_id}/events.jsonl
    {root}/{session_id}/meta.json
    {root}/{session_id}/artifacts/...

Events are fanned out to in-process subscribers so the service can stream
them over a websocket while a run is in flight.
"""
from __future__ import annotations

import json
import queue
import re
import threading
import time
import uuid
from pathlib import Path
from typing import Any

from .errors import SessionStateError, ValidationError
from .events import EVENT_KINDS, SessionEvent

_REDACT_RE = re.compile(r"(secret|token|password|api_key|credential_value)", re.I)

STATUSES = ("idle", "running", "awaiting_approval", "terminated", "failed")


def redact_config(config: dict[str, Any]) -> dict[str, Any]:
    """Drop anything that smells like secret material; keep env var names."""
    out: dict[str, Any] = {}
    for key, value in config.items():
        if key == "credential_env":
            out[key] = value
            continue
        if _REDACT_RE.search(key):
            out[key] = "[redacted]"
        elif isinstance(value, dict):
            out[key] = redact_config(value)
        else:
            out[key] = value
    return out


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._seqs: dict[str, int] = {}
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._guard = threading.Lock()

    # -- session lifecycle -------------------------------------------------

    def create_session(self, config: dict[str, Any] | None = None) -> str:
        session_id = uuid.uuid4().hex[:12]
        sdir = self.root / session_id
        (sdir / "artifacts").mkdir(parents=True)
        meta = {
            "id": session_id,
            "created": time.time(),
            "status": "idle",
            "config": redact_config(config or {}),
        }
        (sdir / "meta.json").write_text(json.dumps(meta, indent=2))
        (sdir / "events.jsonl").touch()
        self.append_event(session_id, "session_started", {"config": meta["config"]})
        return session_id

    def session_dir(self, session_id: str) -> Path:
        sdir = self.root / session_id
        if not sdir.is_dir():
            raise SessionStateError(f"unknown session {session_id!r}")
        return sdir

    def artifacts_dir(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "artifacts"

    def list_sessions(self) -> list[dict[str, Any]]:
        out = []
        for meta_path in sorted(self.root.glob("*/meta.json")):
            try:
                out.append(json.loads(meta_path.read_text()))
            except ValueError:
                continue
        out.sort(key=lambda m: m.get("created", 0))
        return out

    def meta(self, session_id: str) -> dict[str, Any]:
        return json.loads((self.session_dir(session_id) / "meta.json").read_text())

    def set_status(self, session_id: str, status: str) -> None:
        if status not in STATUSES:
            raise ValidationError(f"unknown session status {status!r}")
        sdir = self.session_dir(session_id)
        meta = json.loads((sdir / "meta.json").read_text())
        meta["status"] = status
        (sdir / "meta.json").write_text(json.dumps(meta, indent=2))

    # -- events ------------------------------------------------------------

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def append_event(self, session_id: str, kind: str, payload: dict[str, Any]) -> SessionEvent:
        if kind not in EVENT_KINDS:
            raise ValidationError(f"unknown event kind {kind!r}")
        sdir = self.root / session_id
        if not sdir.is_dir():
            raise SessionStateError(f"unknown session {session_id!r}")
        with self._lock_for(session_id):
            seq = self._seqs.get(session_id)
            if seq is None:
                seq = sum(1 for _ in (sdir / "events.jsonl").open())
            event = SessionEvent(seq=seq, kind=kind, ts=time.time(), payload=payload)
            with (sdir / "events.jsonl").open("a") as fh:
                fh.write(event.to_json() + "\n")
            self._seqs[session_id] = seq + 1
        for q in self._subscribers.get(session_id, []):
            q.put(event)
        return event

    def events(self, session_id: str, from_seq: int = 0) -> list[SessionEvent]:
        sdir = self.session_dir(session_id)
        out = []
        with (sdir / "events.jsonl").open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = SessionEvent.from_json(line)
                if event.seq >= from_seq:
                    out.append(event)
        return out

    def subscribe(self, session_id: str) -> queue.Queue:
        self.session_dir(session_id)
        q: queue.Queue = queue.Queue()
        with self._guard:
            self._subscribers.setdefault(session_id, []).append(q)
        return q

    def unsubscribe(self, session_id: str, q: queue.Queue) -> None:
        with self._guard:
            subs = self._subscribers.get(session_id, [])
            if q in subs:
                subs.remove(q)

    # -- artifacts -----------------------------------------------------------

    def artifact_path(self, session_id: str, name: str) -> Path:
        base = self.artifacts_dir(session_id).resolve()
        candidate = (base / name).resolve()
        if candidate != base and base not in candidate.parents:
            raise ValidationError(f"artifact name {name!r} escapes the artifacts directory")
        return candidate

    def record_artifact(self, session_id: str, path: str | Path) -> SessionEvent | None:
        """Emit artifact_created for a file under the session directory.

        Files below artifacts/ are recorded relative to that directory so the
        recorded name feeds straight back into artifact_path.
        """
        p = Path(path).resolve()
        sdir = self.session_dir(session_id).resolve()
        if not p.is_file():
            return None
        try:
            rel = str(p.relative_to(sdir / "artifacts"))
        except ValueError:
            try:
                rel = str(p.relative_to(sdir))
            except ValueError:
                rel = str(p)
        return self.append_event(
            session_id, "artifact_created", {"path": rel, "bytes": p.stat().st_size}
        )
