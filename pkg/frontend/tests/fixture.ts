// Shared wire-event fixtures. caseStudyStream models one full session the
// way the service records it: plan, an auto tool call, a gated call with an
// approval round-trip, a plotting script, a stats call, and termination.

import type { EventKind, WireEvent } from "../src/wire.js";

export function ev(
  seq: number,
  kind: EventKind,
  payload: Record<string, unknown>,
): WireEvent {
  return { seq, kind, ts: 1755000000 + seq, payload };
}

export function caseStudyStream(): WireEvent[] {
  return [
    ev(1, "session_started", { config: { provider: "replay" } }),
    ev(2, "user_message", { text: "measure the tray and plot the areas" }),
    ev(3, "plan", { text: "segment the images, measure traits, then summarise" }),
    ev(4, "tool_call_proposed", {
      call_id: "c0",
      tool: "get_model_zoo",
      arguments: {},
      approval_required: false,
    }),
    ev(5, "tool_call_started", { call_id: "c0", tool: "get_model_zoo" }),
    ev(6, "tool_result", {
      call_id: "c0",
      tool: "get_model_zoo",
      status: "ok",
      result: { models: 3 },
    }),
    ev(7, "tool_call_proposed", {
      call_id: "c1",
      tool: "instance_segmentation",
      arguments: { checkpoint: "leaf-base", image_dir: "./data" },
      approval_required: false,
    }),
    ev(8, "tool_call_started", { call_id: "c1", tool: "instance_segmentation" }),
    ev(9, "tool_result", {
      call_id: "c1",
      tool: "instance_segmentation",
      status: "ok",
      result: { save_path: "./seg.json" },
    }),
    ev(10, "artifact_created", { path: "seg.json", bytes: 2048 }),
    ev(11, "tool_call_proposed", {
      call_id: "c2",
      tool: "compute_phenotypes_from_ins_seg",
      arguments: { ins_seg_result_path: "./seg.json", save_path: "./phenotypes.csv" },
      approval_required: true,
    }),
    ev(12, "approval_requested", { call_id: "c2", tool: "compute_phenotypes_from_ins_seg" }),
    ev(13, "approval_resolved", { call_id: "c2", approved: true, note: "looks right" }),
    ev(14, "tool_call_started", { call_id: "c2", tool: "compute_phenotypes_from_ins_seg" }),
    ev(15, "tool_result", {
      call_id: "c2",
      tool: "compute_phenotypes_from_ins_seg",
      status: "ok",
      result: { save_path: "./phenotypes.csv", rows: 48 },
    }),
    ev(16, "artifact_created", { path: "phenotypes.csv", bytes: 9000 }),
    ev(17, "assistant_message", { text: "phenotypes extracted for 48 images" }),
    ev(18, "tool_call_proposed", {
      call_id: "c3",
      tool: "run_script",
      arguments: { purpose: "plot projected leaf area by day" },
      approval_required: false,
    }),
    ev(19, "tool_call_started", { call_id: "c3", tool: "run_script" }),
    ev(20, "tool_result", {
      call_id: "c3",
      tool: "run_script",
      status: "ok",
      result: { stdout: "saved area_by_day.png" },
    }),
    ev(21, "artifact_created", { path: "plots/area_by_day.png", bytes: 51200 }),
    ev(22, "assistant_message", { text: "area increases from day 7 to day 14 in every ecotype" }),
    ev(23, "tool_call_proposed", {
      call_id: "c4",
      tool: "anova_test",
      arguments: { column: "projected_leaf_area", group_by: "ecotype" },
      approval_required: false,
    }),
    ev(24, "tool_call_started", { call_id: "c4", tool: "anova_test" }),
    ev(25, "tool_result", {
      call_id: "c4",
      tool: "anova_test",
      status: "ok",
      result: { F: 12.51, p: 0.0002 },
    }),
    ev(26, "artifact_created", { path: "stats/anova.json", bytes: 256 }),
    ev(27, "assistant_message", { text: "the ecotype effect on area is significant" }),
    ev(28, "summary", { text: "48 images measured, traits saved, ecotype effect confirmed" }),
    ev(29, "artifact_created", { path: "weights/checkpoint.bin", bytes: 1048576 }),
    ev(30, "terminated", { reason: "completed" }),
  ];
}
