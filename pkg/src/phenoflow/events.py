"""Session transcript events and the ordering invariant checker."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

EVENT_KINDS = (
    "session_started",
    "user_message",
    "plan",
    "assistant_message",
    "tool_call_proposed",
    "approval_requested",
    "approval_resolved",
    "tool_call_started",
    "tool_result",
    "artifact_created",
    "summary",
    "terminated",
    "error",
)

TERMINAL_KINDS = ("terminated", "error")


@dataclass
class SessionEvent:
    seq: int
    kind: str
    ts: float
    payload: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "kind": self.kind, "ts": self.ts, "payload": self.payload},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionEvent":
        raw = json.loads(line)
        return cls(
            seq=int(raw["seq"]),
            kind=str(raw["kind"]),
            ts=float(raw.get("ts", 0.0)),
            payload=dict(raw.get("payload", {})),
        )


def validate_transcript(events: Iterable[SessionEvent], complete: bool = True) -> list[str]:
    """Check the ordering invariants; returns a list of problems (empty = ok).

    Rules: seq strictly increasing; within each run (a user_message up to the
    next one) a plan precedes the first tool_call_proposed and the run's last
    event is terminal when ``complete``; per tool call the events that are
    present appear in the order proposed, approval_requested,
    approval_resolved, started, result, and a started call also has a result.
    """
    evs = list(events)
    problems: list[str] = []
    last_seq: int | None = None
    for e in evs:
        if e.kind not in EVENT_KINDS:
            problems.append(f"seq {e.seq}: unknown kind {e.kind!r}")
        if last_seq is not None and e.seq <= last_seq:
            problems.append(f"seq {e.seq} not greater than predecessor {last_seq}")
        last_seq = e.seq

    # split into runs on user_message boundaries
    run_bounds: list[tuple[int, int]] = []
    start = None
    for i, e in enumerate(evs):
        if e.kind == "user_message":
            if start is not None:
                run_bounds.append((start, i))
            start = i
    if start is not None:
        run_bounds.append((start, len(evs)))

    call_order = {
        "tool_call_proposed": 0,
        "approval_requested": 1,
        "approval_resolved": 2,
        "tool_call_started": 3,
        "tool_result": 4,
    }
    for lo, hi in run_bounds:
        run = evs[lo:hi]
        first_proposed = next((e for e in run if e.kind == "tool_call_proposed"), None)
        if first_proposed is not None:
            plan = next((e for e in run if e.kind == "plan"), None)
            if plan is None or plan.seq > first_proposed.seq:
                problems.append(
                    f"run at seq {run[0].seq}: no plan before first tool_call_proposed"
                )
        if complete:
            if not run or run[-1].kind not in TERMINAL_KINDS:
                problems.append(
                    f"run at seq {run[0].seq if run else '?'} does not end in a terminal event"
                )
        calls: dict[str, list[SessionEvent]] = {}
        for e in run:
            if e.kind in call_order and "call_id" in e.payload:
                calls.setdefault(str(e.payload["call_id"]), []).append(e)
        for call_id, seq_events in calls.items():
            ranks = [call_order[e.kind] for e in seq_events]
            if ranks != sorted(ranks):
                problems.append(f"call {call_id}: events out of order")
            kinds = [e.kind for e in seq_events]
            if "tool_call_started" in kinds and "tool_result" not in kinds:
                problems.append(f"call {call_id}: started but no result")
            if "tool_call_proposed" not in kinds:
                problems.append(f"call {call_id}: has events but was never proposed")
            if "approval_resolved" in kinds and "approval_requested" not in kinds:
                problems.append(f"call {call_id}: resolution without request")
    return problems
