// Browser entry point. Joins (or creates) a session, subscribes to its event
// stream, and keeps the timeline, approval bar, and artifact pane in sync
// with the view-model. All protocol logic lives in the imported modules;
// this file only touches the DOM.

import { EventStream, ServiceClient, ServiceError, type StreamState } from "./client.js";
import { csvPreview } from "./csv.js";
import {
  applyEvent,
  needsApproval,
  newSessionView,
  type ArtifactEntry,
  type SessionView,
} from "./timeline.js";

interface Page {
  status: HTMLElement;
  timeline: HTMLElement;
  approvals: HTMLElement;
  artifacts: HTMLElement;
  form: HTMLFormElement;
  input: HTMLInputElement;
}

function grab(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`index.html is missing #${id}`);
  }
  return el;
}

function findPage(): Page {
  return {
    status: grab("status"),
    timeline: grab("timeline"),
    approvals: grab("approvals"),
    artifacts: grab("artifacts"),
    form: grab("composer") as HTMLFormElement,
    input: grab("message") as HTMLInputElement,
  };
}

function renderStatus(page: Page, view: SessionView, stream: StreamState): void {
  const link = stream === "open" ? "live" : stream;
  page.status.textContent = `session ${view.sessionId} · ${view.status} · ${link}`;
}

function renderTimeline(page: Page, view: SessionView, rendered: Set<number>): void {
  for (const item of view.items) {
    if (rendered.has(item.seq)) {
      continue;
    }
    rendered.add(item.seq);
    const row = document.createElement("div");
    row.className = `event kind-${item.kind}`;
    const kind = document.createElement("span");
    kind.className = "kind";
    kind.textContent = item.kind;
    const label = document.createElement("span");
    label.className = "label";
    label.textContent = item.label;
    row.append(kind, label);
    page.timeline.appendChild(row);
  }
  page.timeline.scrollTop = page.timeline.scrollHeight;
}

function renderApprovals(page: Page, view: SessionView, client: ServiceClient): void {
  page.approvals.replaceChildren();
  if (!needsApproval(view)) {
    page.approvals.hidden = true;
    return;
  }
  page.approvals.hidden = false;
  for (const prompt of view.pending) {
    const card = document.createElement("div");
    card.className = "approval";
    const title = document.createElement("strong");
    title.textContent = `approve ${prompt.tool}?`;
    const args = document.createElement("pre");
    args.textContent = JSON.stringify(prompt.arguments, null, 2);
    const approve = document.createElement("button");
    approve.textContent = "approve";
    const reject = document.createElement("button");
    reject.textContent = "reject";
    const decide = (ok: boolean) => {
      approve.disabled = true;
      reject.disabled = true;
      const note = ok ? "" : "rejected from the web ui";
      client.resolveApproval(view.sessionId, prompt.callId, ok, note).catch((err) => {
        reportProblem(page, err);
        approve.disabled = false;
        reject.disabled = false;
      });
    };
    approve.addEventListener("click", () => decide(true));
    reject.addEventListener("click", () => decide(false));
    card.append(title, args, approve, reject);
    page.approvals.appendChild(card);
  }
}

function renderArtifacts(
  page: Page,
  view: SessionView,
  client: ServiceClient,
  shown: Set<string>,
): void {
  for (const entry of view.artifacts) {
    if (shown.has(entry.name)) {
      continue;
    }
    shown.add(entry.name);
    page.artifacts.appendChild(artifactCard(entry, view, client));
  }
}

function artifactCard(
  entry: ArtifactEntry,
  view: SessionView,
  client: ServiceClient,
): HTMLElement {
  const card = document.createElement("div");
  card.className = `artifact preview-${entry.preview}`;
  const caption = document.createElement("div");
  caption.className = "caption";
  caption.textContent = `${entry.name} (${entry.bytes} bytes)`;
  card.appendChild(caption);
  const url = client.artifactUrl(view.sessionId, entry.name);
  if (entry.preview === "image") {
    const img = document.createElement("img");
    img.src = url;
    img.alt = entry.name;
    img.loading = "lazy";
    card.appendChild(img);
  } else if (entry.preview === "table") {
    const holder = document.createElement("div");
    holder.textContent = "loading table ...";
    card.appendChild(holder);
    client
      .artifactText(view.sessionId, entry.name)
      .then((text) => holder.replaceChildren(tableFor(text)))
      .catch(() => {
        holder.textContent = "table preview unavailable";
      });
  } else {
    const link = document.createElement("a");
    link.href = url;
    link.textContent = "download";
    link.download = entry.name;
    card.appendChild(link);
  }
  return card;
}

function tableFor(text: string): HTMLElement {
  const page = csvPreview(text);
  const table = document.createElement("table");
  const head = table.createTHead().insertRow();
  for (const column of page.header) {
    const th = document.createElement("th");
    th.textContent = column;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of page.rows) {
    const tr = body.insertRow();
    for (const cell of row) {
      tr.insertCell().textContent = cell;
    }
  }
  if (page.truncated) {
    const note = table.createCaption();
    note.textContent = `showing ${page.rows.length} of ${page.totalRows} rows`;
  }
  return table;
}

function reportProblem(page: Page, err: unknown): void {
  const row = document.createElement("div");
  row.className = "event kind-error";
  const detail = err instanceof ServiceError ? `${err.status}: ${err.message}` : String(err);
  row.textContent = `request failed ${detail}`;
  page.timeline.appendChild(row);
}

async function boot(): Promise<void> {
  const page = findPage();
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? window.location.origin;
  const token = params.get("token") ?? "";
  const client = new ServiceClient(base, { token });

  let sessionId = params.get("session");
  if (sessionId === null) {
    sessionId = await client.createSession();
    params.set("session", sessionId);
    window.history.replaceState(null, "", `?${params.toString()}`);
  }

  const view = newSessionView(sessionId);
  const renderedEvents = new Set<number>();
  const shownArtifacts = new Set<string>();
  let streamState: StreamState = "connecting";

  const redraw = () => {
    renderStatus(page, view, streamState);
    renderTimeline(page, view, renderedEvents);
    renderApprovals(page, view, client);
    renderArtifacts(page, view, client, shownArtifacts);
  };

  const stream = new EventStream(
    client,
    sessionId,
    (ev) => {
      applyEvent(view, ev);
      redraw();
    },
    {
      onState: (state) => {
        streamState = state;
        renderStatus(page, view, streamState);
      },
    },
  );
  stream.connect();

  page.form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = page.input.value.trim();
    if (text === "") {
      return;
    }
    page.input.value = "";
    client.sendMessage(sessionId, text).catch((err) => reportProblem(page, err));
  });

  redraw();
}

document.addEventListener("DOMContentLoaded", () => {
  boot().catch((err) => {
    const status = document.getElementById("status");
    if (status !== null) {
      status.textContent = `failed to start: ${String(err)}`;
    }
  });
});
