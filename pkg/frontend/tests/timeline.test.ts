import { describe, expect, it } from "vitest";

import {
  applyEvent,
  classifyArtifact,
  describeEvent,
  needsApproval,
  newSessionView,
} from "../src/timeline.js";
import { caseStudyStream, ev } from "./fixture.js";

describe("applyEvent ordering", () => {
  it("renders every event exactly once, in wire order", () => {
    const view = newSessionView("s1");
    const stream = caseStudyStream();
    expect(stream).toHaveLength(30);

    for (const event of stream) {
      expect(applyEvent(view, event)).toBe(true);
    }

    expect(view.items).toHaveLength(30);
    expect(view.items.map((item) => item.seq)).toEqual(stream.map((e) => e.seq));
    expect(new Set(view.items.map((item) => item.seq)).size).toBe(30);
    expect(view.lastSeq).toBe(30);
    expect(view.status).toBe("terminated");
  });

  it("ignores replayed frames after a reconnect", () => {
    const view = newSessionView("s1");
    const stream = caseStudyStream();
    for (const event of stream) {
      applyEvent(view, event);
    }
    const before = JSON.stringify(view);

    for (const event of stream.slice(9)) {
      expect(applyEvent(view, event)).toBe(false);
    }

    expect(JSON.stringify(view)).toBe(before);
  });

  it("refuses stale frames even out of order", () => {
    const view = newSessionView("s1");
    const later = ev(5, "plan", { text: "late start" });
    const earlier = ev(3, "user_message", { text: "already summarised" });

    expect(applyEvent(view, later)).toBe(true);
    expect(applyEvent(view, earlier)).toBe(false);
    expect(applyEvent(view, later)).toBe(false);
    expect(view.items).toHaveLength(1);
    expect(view.lastSeq).toBe(5);
  });
});

describe("approval prompts", () => {
  it("shows the control exactly while a request is unresolved", () => {
    const view = newSessionView("s1");
    for (const event of caseStudyStream()) {
      applyEvent(view, event);
      expect(needsApproval(view)).toBe(event.seq === 12);
    }
  });

  it("carries the proposed arguments into the prompt", () => {
    const view = newSessionView("s1");
    for (const event of caseStudyStream().slice(0, 12)) {
      applyEvent(view, event);
    }

    expect(view.pending).toHaveLength(1);
    expect(view.pending[0].callId).toBe("c2");
    expect(view.pending[0].tool).toBe("compute_phenotypes_from_ins_seg");
    expect(view.pending[0].arguments).toEqual({
      ins_seg_result_path: "./seg.json",
      save_path: "./phenotypes.csv",
    });
    expect(view.status).toBe("awaiting_approval");
  });

  it("clears only the resolved call", () => {
    const view = newSessionView("s1");
    applyEvent(view, ev(1, "approval_requested", { call_id: "a", tool: "run_script" }));
    applyEvent(view, ev(2, "approval_requested", { call_id: "b", tool: "anova_test" }));
    applyEvent(view, ev(3, "approval_resolved", { call_id: "a", approved: false, note: "" }));

    expect(view.pending.map((prompt) => prompt.callId)).toEqual(["b"]);
    expect(needsApproval(view)).toBe(true);
  });
});

describe("artifact previews", () => {
  it("splits previews by file type", () => {
    const view = newSessionView("s1");
    for (const event of caseStudyStream()) {
      applyEvent(view, event);
    }

    const previews = Object.fromEntries(
      view.artifacts.map((entry) => [entry.name, entry.preview]),
    );
    expect(previews).toEqual({
      "seg.json": "download",
      "phenotypes.csv": "table",
      "plots/area_by_day.png": "image",
      "stats/anova.json": "download",
      "weights/checkpoint.bin": "download",
    });
    expect(view.artifacts.find((e) => e.name === "phenotypes.csv")?.bytes).toBe(9000);
  });

  it("classifies names case-insensitively", () => {
    expect(classifyArtifact("PLOT.PNG")).toBe("image");
    expect(classifyArtifact("Traits.Csv")).toBe("table");
    expect(classifyArtifact("matrix.tsv")).toBe("table");
    expect(classifyArtifact("reading.jpeg")).toBe("image");
    expect(classifyArtifact("notes.txt")).toBe("download");
    expect(classifyArtifact("archive.csv.gz")).toBe("download");
  });
});

describe("describeEvent", () => {
  it("labels the interesting fields", () => {
    expect(
      describeEvent(
        ev(1, "tool_call_proposed", {
          tool: "run_script",
          arguments: { purpose: "plot" },
          approval_required: true,
        }),
      ),
    ).toBe('run_script {"purpose":"plot"} (needs approval)');

    expect(
      describeEvent(ev(2, "approval_resolved", { approved: true, note: "looks right" })),
    ).toBe("approved: looks right");
    expect(
      describeEvent(ev(3, "approval_resolved", { approved: false })),
    ).toBe("rejected");

    expect(
      describeEvent(
        ev(4, "tool_result", { tool: "anova_test", status: "error", error: "bad column" }),
      ),
    ).toBe("anova_test failed: bad column");

    expect(
      describeEvent(ev(5, "artifact_created", { path: "phenotypes.csv", bytes: 9000 })),
    ).toBe("artifact phenotypes.csv (9000 bytes)");
  });

  it("truncates long bodies", () => {
    const label = describeEvent(
      ev(1, "tool_call_proposed", {
        tool: "run_script",
        arguments: { script: "x".repeat(500) },
        approval_required: false,
      }),
    );
    expect(label.endsWith(" ...")).toBe(true);
    expect(label.length).toBeLessThan(200);
  });
});
