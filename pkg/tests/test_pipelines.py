"""Pipeline manifests: serialization, recording from sessions, replay."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenoflow.errors import PipelineError, RegistryError, ValidationError
from phenoflow.pipelines import (
    ParamBinding,
    PipelineManifest,
    PipelineParam,
    PipelineStep,
    PipelineZoo,
    render_script,
    replay_pipeline,
    resolve_arguments,
    resolved_steps,
    summarise_pipeline,
)
from phenoflow.sessions import SessionStore


def sample_manifest(name="leaf-report"):
    return PipelineManifest(
        name=name,
        description="segment, measure, then print the scale",
        params=[
            PipelineParam(
                name="metadata_path",
                type="string",
                description="image manifest",
                default="./data/meta.json",
                has_default=True,
            ),
            PipelineParam(name="scale", type="number", default=0.03, has_default=True),
        ],
        steps=[
            PipelineStep(
                kind="tool_call",
                tool="infer_instance_segmentation",
                arguments={"file_path": "${metadata_path}", "output_dir": "./results"},
            ),
            PipelineStep(
                kind="tool_call",
                tool="compute_phenotypes_from_ins_seg",
                arguments={
                    "ins_seg_result_path": "./results/ins_seg_results.json",
                    "save_path": "./results/phenotypes.csv",
                    "pixel_to_cm": "${scale}",
                },
            ),
            PipelineStep(
                kind="script",
                profile="python3",
                source="print('scale', ${scale})\n",
                outputs=["report.txt"],
            ),
        ],
    )


# ---------------------------------------------------------------------------
# Manifest document


def test_manifest_round_trips_byte_identically():
    manifest = sample_manifest()
    text = manifest.to_json()
    loaded = PipelineManifest.from_json(text)
    assert loaded == manifest
    assert loaded.to_json() == text
    assert json.loads(text)["manifest_version"] == 1


def test_manifest_placeholders_found_in_arguments_and_source():
    assert sample_manifest().placeholders() == {"metadata_path", "scale"}


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda m: setattr(m, "name", "Bad Name"), "bad pipeline name"),
        (lambda m: setattr(m, "steps", []), "no steps"),
        (lambda m: setattr(m.params[0], "type", "blob"), "unknown type"),
        (lambda m: setattr(m.params[1], "name", "metadata_path"), "twice"),
        (lambda m: setattr(m.steps[0], "tool", ""), "names no tool"),
        (lambda m: setattr(m.steps[2], "source", "   "), "empty script"),
        (lambda m: setattr(m.steps[2], "kind", "query"), "unknown kind"),
        (lambda m: setattr(m, "params", []), "undeclared"),
    ],
)
def test_manifest_validation_rejects(mutate, match):
    manifest = sample_manifest()
    mutate(manifest)
    with pytest.raises(ValidationError, match=match):
        manifest.validate()


def test_from_json_rejects_bad_documents():
    with pytest.raises(ValidationError, match="not valid JSON"):
        PipelineManifest.from_json("{nope")
    with pytest.raises(ValidationError, match="manifest_version"):
        PipelineManifest.from_json('{"manifest_version": 99}')


# ---------------------------------------------------------------------------
# Pipeline zoo


def test_zoo_saves_and_lists_manifests(tmp_path):
    zoo = PipelineZoo(tmp_path / "pipelines")
    zoo.save(sample_manifest("alpha"))
    zoo.save(sample_manifest("beta"))
    assert zoo.names() == ["alpha", "beta"]
    assert "alpha" in zoo and "gamma" not in zoo
    assert zoo.get("alpha").description == sample_manifest().description
    with pytest.raises(RegistryError, match="already exists"):
        zoo.save(sample_manifest("alpha"))
    changed = sample_manifest("alpha")
    changed.description = "second edition"
    zoo.save(changed, overwrite=True)
    assert zoo.get("alpha").description == "second edition"
    with pytest.raises(RegistryError, match="unknown pipeline"):
        zoo.get("gamma")
    with pytest.raises(ValidationError):
        zoo.path("../sneaky")


# ---------------------------------------------------------------------------
# Recording sessions


def record_session(store, items, terminate=True):
    sid = store.create_session({"provider": "replay"})
    store.append_event(sid, "user_message", {"text": "run the analysis"})
    store.append_event(sid, "plan", {"text": "work through the steps"})
    for i, item in enumerate(items, start=1):
        cid = f"call-{i}"
        store.append_event(
            sid,
            "tool_call_proposed",
            {"call_id": cid, "tool": item["tool"], "arguments": item.get("arguments", {})},
        )
        store.append_event(sid, "tool_call_started", {"call_id": cid})
        if item.get("ok", True):
            store.append_event(
                sid,
                "tool_result",
                {"call_id": cid, "status": "ok", "result": item.get("result", {})},
            )
        else:
            store.append_event(
                sid, "tool_result", {"call_id": cid, "status": "error", "error": "boom"}
            )
    store.append_event(sid, "summary", {"text": "all done"})
    if terminate:
        store.append_event(sid, "terminated", {"reason": "completed"})
    return sid


SEG_ITEM = {
    "tool": "infer_instance_segmentation",
    "arguments": {"file_path": "./data/meta.json", "output_dir": "./results"},
    "result": {"images": 2},
}
COMPUTE_ITEM = {
    "tool": "compute_phenotypes_from_ins_seg",
    "arguments": {"ins_seg_result_path": "./results/ins_seg_results.json", "pixel_to_cm": 0.03},
    "result": {"rows": 2},
}
SCRIPT_ITEM = {
    "tool": "coding",
    "arguments": {"message": "merge the tables"},
    "result": {
        "success": True,
        "script": "scale = 0.03\nopen('merged.csv', 'w').write(str(scale))\n",
        "profile": "python3",
        "artifacts": ["merged.csv"],
    },
}


def test_summarise_lifts_literals_into_parameters(tmp_path):
    store = SessionStore(tmp_path / "store")
    zoo = PipelineZoo(tmp_path / "pipelines")
    failed = {"tool": "anova_test", "arguments": {"file_path": "x.csv"}, "ok": False}
    sid = record_session(store, [SEG_ITEM, COMPUTE_ITEM, failed, SCRIPT_ITEM])
    manifest = summarise_pipeline(
        store,
        sid,
        "aracrop",
        zoo,
        parameterize=[
            ParamBinding(name="metadata_path", literal="./data/meta.json"),
            ParamBinding(name="scale", literal=0.03),
        ],
        description="recorded analysis",
    )
    assert [s.kind for s in manifest.steps] == ["tool_call", "tool_call", "script"]
    assert manifest.steps[0].arguments["file_path"] == "${metadata_path}"
    assert manifest.steps[1].arguments["pixel_to_cm"] == "${scale}"
    assert "scale = ${scale}" in manifest.steps[2].source
    assert [(p.name, p.type, p.default) for p in manifest.params] == [
        ("metadata_path", "string", "./data/meta.json"),
        ("scale", "number", 0.03),
    ]
    assert "aracrop" in zoo
    assert zoo.get("aracrop") == manifest


def test_summarise_reads_spilled_results(tmp_path):
    store = SessionStore(tmp_path / "store")
    zoo = PipelineZoo(tmp_path / "pipelines")
    sid = store.create_session()
    store.append_event(sid, "user_message", {"text": "go"})
    store.append_event(sid, "plan", {"text": "one step"})
    store.append_event(
        sid, "tool_call_proposed", {"call_id": "c1", "tool": "coding", "arguments": {}}
    )
    store.append_event(sid, "tool_call_started", {"call_id": "c1"})
    full = {"success": True, "script": "print('spilled')\n", "profile": "python3", "artifacts": []}
    store.artifact_path(sid, "tool_result_c1.json").write_text(json.dumps(full))
    store.append_event(
        sid,
        "tool_result",
        {
            "call_id": "c1",
            "status": "ok",
            "spilled_to": "tool_result_c1.json",
            "result": {"preview": "..."},
        },
    )
    store.append_event(sid, "terminated", {"reason": "completed"})
    manifest = summarise_pipeline(store, sid, "spilled", zoo)
    assert manifest.steps[0].kind == "script"
    assert manifest.steps[0].source == "print('spilled')\n"


def test_summarise_bookkeeping_errors(tmp_path):
    store = SessionStore(tmp_path / "store")
    zoo = PipelineZoo(tmp_path / "pipelines")

    sid = record_session(store, [SEG_ITEM])
    summarise_pipeline(store, sid, "taken", zoo)
    with pytest.raises(RegistryError, match="already exists"):
        summarise_pipeline(store, sid, "taken", zoo)

    with pytest.raises(PipelineError, match="did not terminate"):
        summarise_pipeline(store, record_session(store, [SEG_ITEM], terminate=False), "open", zoo)

    nothing_ok = record_session(store, [{"tool": "anova_test", "ok": False}])
    with pytest.raises(PipelineError, match="no successful tool calls"):
        summarise_pipeline(store, nothing_ok, "hollow", zoo)

    sid = record_session(store, [SEG_ITEM])
    with pytest.raises(PipelineError, match="does not occur"):
        summarise_pipeline(
            store, sid, "unbound", zoo, parameterize=[ParamBinding(name="ghost", literal="zzz")]
        )


def test_summarise_respects_upto_seq(tmp_path):
    store = SessionStore(tmp_path / "store")
    zoo = PipelineZoo(tmp_path / "pipelines")
    sid = record_session(store, [SEG_ITEM, COMPUTE_ITEM])
    cutoff = store.events(sid)[-1].seq + 1
    store.append_event(sid, "user_message", {"text": "now something else"})

    with pytest.raises(PipelineError, match="did not terminate"):
        summarise_pipeline(store, sid, "tail", zoo)
    manifest = summarise_pipeline(store, sid, "head", zoo, upto_seq=cutoff)
    assert len(manifest.steps) == 2


@settings(max_examples=40, deadline=None)
@given(
    outcomes=st.lists(
        st.tuples(st.sampled_from(["tool", "script"]), st.booleans()), min_size=1, max_size=6
    ).filter(lambda items: any(ok for _, ok in items))
)
def test_step_count_equals_successful_results(tmp_path_factory, outcomes):
    store = SessionStore(tmp_path_factory.mktemp("store"))
    zoo = PipelineZoo(tmp_path_factory.mktemp("pipelines"))
    items = []
    for kind, ok in outcomes:
        if kind == "tool":
            items.append({"tool": "get_model_zoo", "ok": ok, "result": {"models": []}})
        else:
            items.append(
                {
                    "tool": "coding",
                    "ok": ok,
                    "result": {"script": "print(1)\n", "profile": "python3", "artifacts": []},
                }
            )
    sid = record_session(store, items)
    manifest = summarise_pipeline(store, sid, "counted", zoo)
    survivors = [kind for kind, ok in outcomes if ok]
    assert len(manifest.steps) == len(survivors)
    expected = ["script" if kind == "script" else "tool_call" for kind in survivors]
    assert [s.kind for s in manifest.steps] == expected


# ---------------------------------------------------------------------------
# Replay


def test_resolve_arguments_merges_defaults():
    manifest = sample_manifest()
    values = resolve_arguments(manifest, {"scale": 0.5})
    assert values == {"metadata_path": "./data/meta.json", "scale": 0.5}
    with pytest.raises(PipelineError, match="unknown pipeline parameters"):
        resolve_arguments(manifest, {"zoom": 2})
    manifest.params[1].has_default = False
    with pytest.raises(PipelineError, match="missing required"):
        resolve_arguments(manifest, {})


def test_substitution_keeps_types_for_whole_placeholders():
    steps = resolved_steps(sample_manifest(), {"scale": 0.25})
    assert steps[0].arguments["file_path"] == "./data/meta.json"
    assert steps[1].arguments["pixel_to_cm"] == 0.25
    assert steps[2].source == "print('scale', 0.25)\n"


def test_replay_runs_steps_in_order_and_stops_at_failure():
    manifest = sample_manifest()
    calls = []

    def run_tool(name, arguments):
        calls.append(name)
        if name == "compute_phenotypes_from_ins_seg":
            raise ValidationError("segmentation result missing")
        return {"artifacts": [f"{name}.out"]}

    def run_script(source, profile):
        calls.append("script")
        return {"ok": True, "detail": "", "artifacts": ["report.txt"]}

    report = replay_pipeline(manifest, {}, run_tool, run_script)
    assert calls == ["infer_instance_segmentation", "compute_phenotypes_from_ins_seg"]
    assert not report.ok
    assert report.failed_step.index == 2
    assert "segmentation result missing" in report.failed_step.detail
    assert [s.status for s in report.steps] == ["ok", "error", "skipped"]

    good = replay_pipeline(
        manifest, {}, lambda name, args: {"artifacts": []}, run_script
    )
    assert good.ok
    assert good.to_dict()["steps"][2]["artifacts"] == ["report.txt"]


def test_replay_reports_script_failures():
    manifest = sample_manifest()

    def run_script(source, profile):
        return {"ok": False, "detail": "exit 1", "artifacts": []}

    report = replay_pipeline(manifest, {}, lambda n, a: {}, run_script)
    assert report.failed_step.kind == "script"
    assert report.failed_step.detail == "exit 1"


def test_render_script_outlines_the_manifest():
    text = render_script(sample_manifest())
    assert text.startswith("# pipeline: leaf-report")
    assert "#   scale: number = 0.03" in text
    assert "infer_instance_segmentation(" in text
    assert "print('scale', ${scale})" in text
