// Shapes that cross the wire between the phenoflow service and this UI.
// The WebSocket route delivers one JSON event per text frame; the REST
// routes wrap the same objects in named envelopes ({"events": [...]},
// {"sessions": [...]}). Everything here mirrors the server encoding, so
// field names stay snake_case.

export const EVENT_KINDS = [
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
] as const;

export type EventKind = (typeof EVENT_KINDS)[number];

export interface WireEvent {
  seq: number;
  kind: EventKind;
  ts: number;
  payload: Record<string, unknown>;
}

export interface SessionMeta {
  id: string;
  created: number;
  status: string;
  config?: Record<string, unknown>;
}

export interface PendingCall {
  call_id: string;
  tool: string;
  arguments: Record<string, unknown>;
}

/** Response body shared by session creation, messages, and approvals. */
export interface SessionAck {
  session_id: string;
  status: string;
  pending_call?: PendingCall;
}

export function isWireEvent(value: unknown): value is WireEvent {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return false;
  }
  const v = value as Record<string, unknown>;
  return (
    typeof v.seq === "number" &&
    Number.isInteger(v.seq) &&
    v.seq >= 1 &&
    typeof v.kind === "string" &&
    (EVENT_KINDS as readonly string[]).includes(v.kind) &&
    typeof v.ts === "number" &&
    typeof v.payload === "object" &&
    v.payload !== null &&
    !Array.isArray(v.payload)
  );
}

/** Parse one WebSocket frame; null for anything that is not a session event. */
export function parseWireEvent(text: string): WireEvent | null {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    return null;
  }
  return isWireEvent(value) ? value : null;
}
