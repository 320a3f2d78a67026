import { describe, expect, it } from "vitest";

import {
  EventStream,
  ServiceClient,
  ServiceError,
  type FetchLike,
  type SocketLike,
} from "../src/client.js";
import { applyEvent, needsApproval, newSessionView } from "../src/timeline.js";
import type { WireEvent } from "../src/wire.js";
import { caseStudyStream, ev } from "./fixture.js";

interface RecordedCall {
  url: string;
  init: RequestInit | undefined;
}

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
    text: async () => JSON.stringify(body),
  } as unknown as Response;
}

function recordingFetch(responses: Response[]): { fn: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fn: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (next === undefined) {
      throw new Error(`unexpected fetch of ${url}`);
    }
    return next;
  };
  return { fn, calls };
}

function headersOf(call: RecordedCall): Record<string, string> {
  return (call.init?.headers ?? {}) as Record<string, string>;
}

function bodyOf(call: RecordedCall): unknown {
  return JSON.parse(String(call.init?.body));
}

class FakeSocket implements SocketLike {
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  closedByClient = false;

  constructor(readonly url: string) {}

  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  emit(event: WireEvent): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }

  emitRaw(data: unknown): void {
    this.onmessage?.({ data });
  }

  drop(): void {
    this.onclose?.();
  }
}

function socketRig() {
  const sockets: FakeSocket[] = [];
  const retries: Array<() => void> = [];
  return {
    sockets,
    retries,
    factory: (url: string) => {
      const socket = new FakeSocket(url);
      sockets.push(socket);
      return socket;
    },
    schedule: (fn: () => void) => {
      retries.push(fn);
    },
  };
}

describe("ServiceClient routes", () => {
  it("creates sessions and sends messages with auth headers", async () => {
    const { fn, calls } = recordingFetch([
      jsonResponse(200, { session_id: "s-1", status: "idle" }),
      jsonResponse(200, {
        session_id: "s-1",
        status: "awaiting_approval",
        pending_call: { call_id: "c2", tool: "compute_phenotypes_from_ins_seg", arguments: {} },
      }),
    ]);
    const client = new ServiceClient("http://box:8042/", { token: "sekrit", fetchFn: fn });

    const sessionId = await client.createSession();
    expect(sessionId).toBe("s-1");
    expect(calls[0].url).toBe("http://box:8042/sessions");
    expect(calls[0].init?.method).toBe("POST");
    expect(headersOf(calls[0]).authorization).toBe("Bearer sekrit");

    const ack = await client.sendMessage("s-1", "measure the tray");
    expect(ack.status).toBe("awaiting_approval");
    expect(ack.pending_call?.call_id).toBe("c2");
    expect(calls[1].url).toBe("http://box:8042/sessions/s-1/messages");
    expect(headersOf(calls[1])["content-type"]).toBe("application/json");
    expect(bodyOf(calls[1])).toEqual({ text: "measure the tray" });
  });

  it("puts the approval verdict on the wire", async () => {
    const { fn, calls } = recordingFetch([
      jsonResponse(200, { session_id: "s-1", status: "running" }),
    ]);
    const client = new ServiceClient("http://box:8042", { fetchFn: fn });

    const ack = await client.resolveApproval("s-1", "c2", false, "wrong file");

    expect(ack.status).toBe("running");
    expect(calls[0].url).toBe("http://box:8042/sessions/s-1/approvals/c2");
    expect(calls[0].init?.method).toBe("POST");
    expect(bodyOf(calls[0])).toEqual({ approve: false, note: "wrong file" });
  });

  it("turns error bodies into ServiceError", async () => {
    const { fn } = recordingFetch([
      jsonResponse(404, { error: "unknown session 'ghost'" }),
    ]);
    const client = new ServiceClient("http://box:8042", { fetchFn: fn });

    const failure = await client.sendMessage("ghost", "hi").catch((err) => err);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.status).toBe(404);
    expect(failure.message).toBe("unknown session 'ghost'");
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const broken = {
      ok: false,
      status: 502,
      json: async () => {
        throw new Error("not json");
      },
    } as unknown as Response;
    const client = new ServiceClient("http://box:8042", { fetchFn: async () => broken });

    const failure = await client.createSession().catch((err) => err);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.message).toBe("request failed with status 502");
  });

  it("filters junk out of fetched event lists", async () => {
    const { fn, calls } = recordingFetch([
      jsonResponse(200, {
        events: [
          ev(1, "session_started", { config: {} }),
          { nonsense: true },
          { seq: "2", kind: "plan", ts: 0, payload: {} },
        ],
      }),
    ]);
    const client = new ServiceClient("http://box:8042", { fetchFn: fn });

    const events = await client.events("s-1", 1);
    expect(events).toHaveLength(1);
    expect(events[0].kind).toBe("session_started");
    expect(calls[0].url).toBe("http://box:8042/sessions/s-1/events?from_seq=1");
  });

  it("builds encoded artifact and socket urls", () => {
    const client = new ServiceClient("http://box:8042");
    expect(client.artifactUrl("s-1", "plots/area by day.png")).toBe(
      "http://box:8042/sessions/s-1/artifacts/plots/area%20by%20day.png",
    );
    expect(client.eventsSocketUrl("s-1", 4)).toBe(
      "ws://box:8042/sessions/s-1/events?from_seq=4",
    );
  });
});

describe("EventStream", () => {
  it("resumes after a drop without duplicating events", () => {
    const rig = socketRig();
    const client = new ServiceClient("http://box:8042");
    const seen: number[] = [];
    const states: string[] = [];
    const stream = new EventStream(client, "s-1", (event) => seen.push(event.seq), {
      socketFactory: rig.factory,
      schedule: rig.schedule,
      onState: (state) => states.push(state),
    });
    const fullStream = caseStudyStream();

    stream.connect();
    expect(rig.sockets).toHaveLength(1);
    expect(rig.sockets[0].url).toBe("ws://box:8042/sessions/s-1/events?from_seq=1");
    rig.sockets[0].open();
    for (const event of fullStream.slice(0, 12)) {
      rig.sockets[0].emit(event);
    }
    expect(seen).toEqual(fullStream.slice(0, 12).map((e) => e.seq));

    rig.sockets[0].drop();
    expect(states.at(-1)).toBe("closed");
    expect(rig.retries).toHaveLength(1);
    rig.retries.shift()!();

    expect(rig.sockets).toHaveLength(2);
    expect(rig.sockets[1].url).toBe("ws://box:8042/sessions/s-1/events?from_seq=13");
    rig.sockets[1].open();
    // a generous server replays overlap; the stream must drop it
    for (const event of fullStream.slice(8)) {
      rig.sockets[1].emit(event);
    }

    expect(seen).toEqual(fullStream.map((e) => e.seq));
    expect(states).toEqual(["connecting", "open", "closed", "connecting", "open"]);
  });

  it("ignores frames that are not session events", () => {
    const rig = socketRig();
    const client = new ServiceClient("http://box:8042");
    const seen: number[] = [];
    const stream = new EventStream(client, "s-1", (event) => seen.push(event.seq), {
      socketFactory: rig.factory,
      schedule: rig.schedule,
    });

    stream.connect();
    rig.sockets[0].emitRaw("not even json {");
    rig.sockets[0].emitRaw(JSON.stringify({ seq: 1, kind: "no_such_kind", ts: 0, payload: {} }));
    rig.sockets[0].emitRaw(new ArrayBuffer(4));
    rig.sockets[0].emit(ev(1, "session_started", { config: {} }));

    expect(seen).toEqual([1]);
  });

  it("stays down after stop", () => {
    const rig = socketRig();
    const client = new ServiceClient("http://box:8042");
    const stream = new EventStream(client, "s-1", () => {}, {
      socketFactory: rig.factory,
      schedule: rig.schedule,
    });

    stream.connect();
    stream.stop();

    expect(rig.sockets[0].closedByClient).toBe(true);
    expect(rig.retries).toHaveLength(0);
    stream.connect();
    expect(rig.sockets).toHaveLength(1);
  });
});

describe("approval round-trip through the view", () => {
  it("surfaces the prompt, sends the verdict, and advances on the pushed events", async () => {
    const rig = socketRig();
    const { fn, calls } = recordingFetch([
      jsonResponse(200, { session_id: "s-1", status: "running" }),
    ]);
    const client = new ServiceClient("http://box:8042", { fetchFn: fn });
    const view = newSessionView("s-1");
    const stream = new EventStream(client, "s-1", (event) => applyEvent(view, event), {
      socketFactory: rig.factory,
      schedule: rig.schedule,
    });
    const fullStream = caseStudyStream();

    stream.connect();
    rig.sockets[0].open();
    for (const event of fullStream.slice(0, 12)) {
      rig.sockets[0].emit(event);
    }

    expect(needsApproval(view)).toBe(true);
    expect(view.pending[0].callId).toBe("c2");
    expect(view.status).toBe("awaiting_approval");

    const prompt = view.pending[0];
    await client.resolveApproval(view.sessionId, prompt.callId, true, "go ahead");
    expect(calls[0].url).toBe("http://box:8042/sessions/s-1/approvals/c2");
    expect(bodyOf(calls[0])).toEqual({ approve: true, note: "go ahead" });

    for (const event of fullStream.slice(12, 16)) {
      rig.sockets[0].emit(event);
    }

    expect(needsApproval(view)).toBe(false);
    expect(view.status).toBe("running");
    expect(view.items).toHaveLength(16);
    expect(view.items.at(-1)?.kind).toBe("artifact_created");
    expect(view.artifacts.map((entry) => entry.name)).toEqual(["seg.json", "phenotypes.csv"]);
    expect(view.artifacts[1].preview).toBe("table");
  });
});
