// Pure view-model for one session. The DOM layer feeds every wire event
// through applyEvent and re-renders from the view; keeping this module free
// of browser APIs is what makes the ordering rules testable.
//
// Invariants the tests lean on:
//   - one timeline item per accepted event, in seq order;
//   - a frame with seq <= lastSeq is dropped, so replayed backlog after a
//     reconnect cannot duplicate items;
//   - an approval prompt exists exactly while an approval_requested event
//     has no matching approval_resolved.

import type { WireEvent } from "./wire.js";

export type PreviewKind = "image" | "table" | "download";

export interface TimelineItem {
  seq: number;
  kind: string;
  label: string;
}

export interface ArtifactEntry {
  name: string;
  bytes: number;
  preview: PreviewKind;
}

export interface ApprovalPrompt {
  callId: string;
  tool: string;
  arguments: Record<string, unknown>;
}

export interface SessionView {
  sessionId: string;
  status: string;
  lastSeq: number;
  items: TimelineItem[];
  pending: ApprovalPrompt[];
  artifacts: ArtifactEntry[];
  /** Arguments from tool_call_proposed, keyed by call id, so the approval
   * prompt can show what the tool is about to do. */
  proposedArguments: Record<string, Record<string, unknown>>;
}

export function newSessionView(sessionId: string): SessionView {
  return {
    sessionId,
    status: "idle",
    lastSeq: 0,
    items: [],
    pending: [],
    artifacts: [],
    proposedArguments: {},
  };
}

const IMAGE_SUFFIXES = [".png", ".jpg", ".jpeg", ".gif", ".webp", ".svg"];

export function classifyArtifact(name: string): PreviewKind {
  const lower = name.toLowerCase();
  if (IMAGE_SUFFIXES.some((suffix) => lower.endsWith(suffix))) {
    return "image";
  }
  if (lower.endsWith(".csv") || lower.endsWith(".tsv")) {
    return "table";
  }
  return "download";
}

const LABEL_LIMIT = 160;

function compact(value: unknown): string {
  let text: string;
  if (typeof value === "string") {
    text = value;
  } else {
    try {
      text = JSON.stringify(value) ?? String(value);
    } catch {
      text = String(value);
    }
  }
  return text.length > LABEL_LIMIT ? `${text.slice(0, LABEL_LIMIT)} ...` : text;
}

export function describeEvent(ev: WireEvent): string {
  const p = ev.payload;
  switch (ev.kind) {
    case "session_started":
      return "session started";
    case "user_message":
    case "plan":
    case "assistant_message":
    case "summary":
      return compact(String(p.text ?? ""));
    case "tool_call_proposed": {
      const gate = p.approval_required ? " (needs approval)" : "";
      return `${p.tool} ${compact(p.arguments ?? {})}${gate}`;
    }
    case "approval_requested":
      return `waiting for approval: ${p.tool}`;
    case "approval_resolved": {
      const verdict = p.approved ? "approved" : "rejected";
      const note = typeof p.note === "string" && p.note !== "" ? `: ${p.note}` : "";
      return `${verdict}${note}`;
    }
    case "tool_call_started":
      return `running ${p.tool}`;
    case "tool_result":
      if (p.status === "ok") {
        return `${p.tool} ok ${compact(p.result ?? {})}`;
      }
      return `${p.tool} failed: ${compact(p.error ?? "")}`;
    case "artifact_created":
      return `artifact ${p.path} (${p.bytes} bytes)`;
    case "terminated":
      return `done: ${p.reason ?? ""}`;
    case "error":
      return `error: ${compact(String(p.message ?? ""))}`;
  }
}

/** Fold one event into the view. Returns false when the frame is stale
 * (already seen, or older than the high-water mark) and changed nothing. */
export function applyEvent(view: SessionView, ev: WireEvent): boolean {
  if (ev.seq <= view.lastSeq) {
    return false;
  }
  view.lastSeq = ev.seq;
  view.items.push({ seq: ev.seq, kind: ev.kind, label: describeEvent(ev) });
  const p = ev.payload;
  switch (ev.kind) {
    case "user_message":
      view.status = "running";
      break;
    case "tool_call_proposed":
      if (typeof p.call_id === "string") {
        view.proposedArguments[p.call_id] = asRecord(p.arguments);
      }
      break;
    case "approval_requested": {
      const callId = String(p.call_id ?? "");
      view.status = "awaiting_approval";
      view.pending.push({
        callId,
        tool: String(p.tool ?? ""),
        arguments: view.proposedArguments[callId] ?? {},
      });
      break;
    }
    case "approval_resolved":
      view.status = "running";
      view.pending = view.pending.filter((prompt) => prompt.callId !== p.call_id);
      break;
    case "artifact_created": {
      const name = String(p.path ?? "");
      view.artifacts.push({
        name,
        bytes: typeof p.bytes === "number" ? p.bytes : 0,
        preview: classifyArtifact(name),
      });
      break;
    }
    case "terminated":
      view.status = "terminated";
      break;
    case "error":
      view.status = "failed";
      break;
  }
  return true;
}

/** The approve/reject controls should be on screen exactly when this holds. */
export function needsApproval(view: SessionView): boolean {
  return view.pending.length > 0;
}

function asRecord(value: unknown): Record<string, unknown> {
  if (typeof value === "object" && value !== null && !Array.isArray(value)) {
    return value as Record<string, unknown>;
  }
  return {};
}
