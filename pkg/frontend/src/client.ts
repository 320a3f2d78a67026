// REST and WebSocket access to the service. Both transports take injectable
// constructors (fetch, socket factory, retry scheduler) so the tests can
// drive them without a network.

import {
  isWireEvent,
  parseWireEvent,
  type SessionAck,
  type SessionMeta,
  type WireEvent,
} from "./wire.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  token?: string;
  fetchFn?: FetchLike;
}

export class ServiceClient {
  private readonly base: string;
  private readonly token: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, options: ClientOptions = {}) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.token = options.token ?? "";
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
  }

  async createSession(): Promise<string> {
    const ack = await this.call<SessionAck>("/sessions", { method: "POST" });
    return ack.session_id;
  }

  async listSessions(): Promise<SessionMeta[]> {
    const data = await this.call<{ sessions: SessionMeta[] }>("/sessions");
    return data.sessions;
  }

  sendMessage(sessionId: string, text: string): Promise<SessionAck> {
    return this.call<SessionAck>(`/sessions/${encodeURIComponent(sessionId)}/messages`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  resolveApproval(
    sessionId: string,
    callId: string,
    approve: boolean,
    note = "",
  ): Promise<SessionAck> {
    const path =
      `/sessions/${encodeURIComponent(sessionId)}` +
      `/approvals/${encodeURIComponent(callId)}`;
    return this.call<SessionAck>(path, {
      method: "POST",
      body: JSON.stringify({ approve, note }),
    });
  }

  async events(sessionId: string, fromSeq = 0): Promise<WireEvent[]> {
    const path =
      `/sessions/${encodeURIComponent(sessionId)}/events?from_seq=${fromSeq}`;
    const data = await this.call<{ events: unknown[] }>(path);
    return data.events.filter(isWireEvent);
  }

  artifactUrl(sessionId: string, name: string): string {
    const encoded = name.split("/").map(encodeURIComponent).join("/");
    return `${this.base}/sessions/${encodeURIComponent(sessionId)}/artifacts/${encoded}`;
  }

  /** Fetch a text artifact (CSV previews) with the same auth as API calls. */
  async artifactText(sessionId: string, name: string): Promise<string> {
    const response = await this.fetchFn(this.artifactUrl(sessionId, name), {
      headers: this.headers(),
    });
    if (!response.ok) {
      throw new ServiceError(response.status, `artifact ${name} not available`);
    }
    return response.text();
  }

  eventsSocketUrl(sessionId: string, fromSeq: number): string {
    const wsBase = this.base.replace(/^http/, "ws");
    return `${wsBase}/sessions/${encodeURIComponent(sessionId)}/events?from_seq=${fromSeq}`;
  }

  private headers(hasBody = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (hasBody) {
      headers["content-type"] = "application/json";
    }
    if (this.token !== "") {
      headers["authorization"] = `Bearer ${this.token}`;
    }
    return headers;
  }

  private async call<T>(path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      ...init,
      headers: this.headers(init.body !== undefined),
    });
    if (!response.ok) {
      let message = `request failed with status ${response.status}`;
      try {
        const body = (await response.json()) as { error?: unknown };
        if (typeof body.error === "string" && body.error !== "") {
          message = body.error;
        }
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ServiceError(response.status, message);
    }
    return (await response.json()) as T;
  }
}

// -- live event stream --------------------------------------------------------

export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type StreamState = "connecting" | "open" | "closed" | "stopped";

export interface StreamOptions {
  socketFactory?: SocketFactory;
  reconnectDelayMs?: number;
  schedule?: (fn: () => void, delayMs: number) => void;
  onState?: (state: StreamState) => void;
}

/**
 * Ordered, resumable delivery of session events.
 *
 * Every (re)connect asks the server for seq >= lastSeq + 1, and any frame at
 * or below the high-water mark is dropped, so the callback sees each event
 * exactly once no matter how much backlog a reconnect replays.
 */
export class EventStream {
  lastSeq = 0;
  private socket: SocketLike | null = null;
  private stopped = false;
  private readonly makeSocket: SocketFactory;
  private readonly schedule: (fn: () => void, delayMs: number) => void;
  private readonly delayMs: number;

  constructor(
    private readonly client: ServiceClient,
    private readonly sessionId: string,
    private readonly onEvent: (ev: WireEvent) => void,
    private readonly options: StreamOptions = {},
  ) {
    this.makeSocket =
      options.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.schedule =
      options.schedule ??
      ((fn, delayMs) => {
        setTimeout(fn, delayMs);
      });
    this.delayMs = options.reconnectDelayMs ?? 1000;
  }

  connect(): void {
    if (this.stopped) {
      return;
    }
    this.setState("connecting");
    const url = this.client.eventsSocketUrl(this.sessionId, this.lastSeq + 1);
    const socket = this.makeSocket(url);
    this.socket = socket;
    socket.onopen = () => {
      this.setState("open");
    };
    socket.onmessage = (event) => {
      if (typeof event.data !== "string") {
        return;
      }
      const parsed = parseWireEvent(event.data);
      if (parsed === null || parsed.seq <= this.lastSeq) {
        return;
      }
      this.lastSeq = parsed.seq;
      this.onEvent(parsed);
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.stopped) {
        return;
      }
      this.setState("closed");
      this.schedule(() => this.connect(), this.delayMs);
    };
  }

  stop(): void {
    this.stopped = true;
    const socket = this.socket;
    this.socket = null;
    if (socket !== null) {
      socket.close();
    }
    this.setState("stopped");
  }

  private setState(state: StreamState): void {
    this.options.onState?.(state);
  }
}
