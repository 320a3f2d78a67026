"""Shipping checklist: one test per release requirement.

Each test prints a single ``[acceptance] <name>: PASS|FAIL`` line (visible
under ``pytest -s``), so this module doubles as the release checklist. The
tolerances and time budgets asserted here are the product requirements, not
implementation details; loosening them is a behaviour change.
"""
from __future__ import annotations

import csv
import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

import test_geometry_raster as raster
from conftest import CASE1_PROMPT, case1_config, seed_case1_inputs, write_png
from test_vision import SEG_CKPT, ScriptedAdapter, make_jobs
from phenoflow.app import Workbench
from phenoflow.errors import AdapterOutputError, SandboxViolation
from phenoflow.evals.harness import EvalSuite, EvalTask, GoldStep, run_suite
from phenoflow.evals.suites import load_suite
from phenoflow.events import validate_transcript
from phenoflow.geometry import PHENOTYPE_COLUMNS, compute_phenotypes
from phenoflow.geometry.coco import parse_segmentation
from phenoflow.llm import HashEmbedder, ReplayProvider
from phenoflow.rag import RagStore
from phenoflow.sandbox import raise_on_violation, run_sandboxed
from phenoflow.stats import linear_fit, one_way_anova, pearson, pooled_t_test, tukey_kramer
from phenoflow.vision import (
    InProcessTransport,
    StubVisionAdapter,
    resolve_image_inputs,
    run_conformance,
)

ORACLE = json.loads((Path(__file__).parent / "fixtures" / "stats_oracle.json").read_text())

METADATA_COLUMNS = {"file_name", "plant_id", "ecotype", "days_after_sowing"}


@contextmanager
def checklist(label):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {label}: FAIL")
        raise
    print(f"[acceptance] {label}: PASS")


def close(a, b, tol=1e-6):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol * 1e-3)


# ---------------------------------------------------------------------------
# 1. Trait extraction on polygons, where closed forms exist


def test_analytic_traits_on_the_square_fixture():
    with checklist("trait extraction, analytic route"):
        start = time.perf_counter()
        doc = {
            "images": [{"id": 1, "file_name": "sq.png", "width": 200, "height": 200}],
            "annotations": [{
                "id": 1, "image_id": 1, "category_id": 1,
                "segmentation": [[10.0, 10.0, 110.0, 10.0, 110.0, 110.0, 10.0, 110.0]],
            }],
        }
        rec = compute_phenotypes(parse_segmentation(doc))[0]
        assert abs(rec.projected_leaf_area - 10_000.0) < 1e-6
        assert abs(rec.perimeter - 400.0) < 1e-6
        assert abs(rec.diameter - 100.0 * math.sqrt(2.0)) < 1e-6
        assert abs(rec.compactness - 1.0) < 1e-9
        assert abs(rec.stockiness - math.pi / 4.0) < 1e-6
        assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------------------
# 2. Trait extraction on masks, checked against the shared-nothing oracle


def test_raster_traits_on_the_disk_fixture_match_the_oracle():
    with checklist("trait extraction, raster route vs oracle"):
        start = time.perf_counter()
        mask = raster.disk_mask(100)
        rec = raster.raster_record([mask])

        pixels = int(mask.sum())
        assert rec.projected_leaf_area == pixels
        assert abs(pixels - math.pi * 1e4) / (math.pi * 1e4) < 0.01

        march = raster.oracle_march_perimeter(mask)
        assert march > 0
        assert abs(rec.perimeter - march) / march < 1e-6
        assert abs(rec.diameter - raster.oracle_diameter(mask)) < 1e-6

        assert 198.0 <= rec.diameter <= 202.0
        assert 0.93 <= rec.stockiness <= 1.02
        assert 0.98 <= rec.compactness <= 1.0
        assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# 3. Pixel-to-cm scale enters areas squared, lengths linearly, ratios not at all


def test_scale_law_on_twenty_random_mask_sets():
    with checklist("pixel scale law"):
        rng = np.random.default_rng(1207)
        for _ in range(20):
            masks = []
            for _ in range(int(rng.integers(1, 5))):
                canvas = np.zeros((96, 96), dtype=bool)
                for _ in range(int(rng.integers(1, 4))):
                    r0, c0 = (int(v) for v in rng.integers(4, 60, 2))
                    h, w = (int(v) for v in rng.integers(6, 30, 2))
                    canvas[r0:r0 + h, c0:c0 + w] = True
                masks.append(canvas)
            base = raster.raster_record(masks, pixel_to_cm=1.0)
            scaled = raster.raster_record(masks, pixel_to_cm=0.03)

            assert scaled.leaf_count == base.leaf_count
            assert scaled.projected_leaf_area == base.projected_leaf_area * 0.03 * 0.03
            assert scaled.average_leaf_area == base.average_leaf_area * 0.03 * 0.03
            assert scaled.diameter == base.diameter * 0.03
            assert scaled.perimeter == base.perimeter * 0.03
            assert scaled.compactness == base.compactness
            assert scaled.stockiness == base.stockiness


# ---------------------------------------------------------------------------
# 4. Inference statistics against the frozen reference values


def test_statistics_match_the_frozen_references():
    with checklist("inference statistics vs frozen references"):
        start = time.perf_counter()

        for name in ("anova3", "anova5"):
            ref = ORACLE[name]
            groups = {f"g{i}": vals for i, vals in enumerate(ref["groups"])}
            res = one_way_anova(groups)
            assert close(res.f_stat, ref["F"])
            assert close(res.p_value, ref["p"])

        five = ORACLE["anova5"]
        groups5 = {f"g{i}": vals for i, vals in enumerate(five["groups"])}
        by_pair = {(c.group_a, c.group_b): c for c in tukey_kramer(groups5)}
        for pair in five["tukey"]:
            assert abs(by_pair[(f"g{pair['a']}", f"g{pair['b']}")].p_adj - pair["p"]) < 1e-4

        for name in ("pearson32", "pearson6"):
            ref = ORACLE[name]
            res = pearson(ref["x"], ref["y"])
            assert close(res.r, ref["r"])
            assert close(res.p_value, ref["p"])

        fit = linear_fit(ORACLE["pearson32"]["x"], ORACLE["pearson32"]["y"])
        assert close(fit.slope, ORACLE["pearson32"]["slope"])
        assert close(fit.intercept, ORACLE["pearson32"]["intercept"])
        assert close(fit.r_squared, ORACLE["pearson32"]["r2"])

        a, b = ORACLE["two_groups"]["groups"]
        t, _ = pooled_t_test(a, b)
        assert abs(one_way_anova({"a": a, "b": b}).f_stat - t * t) < 1e-9

        assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# 5 and 6. The recorded rosette session end to end, then its saved pipeline


@pytest.fixture(scope="module")
def case1_session(tmp_path_factory):
    wb = Workbench(case1_config(tmp_path_factory.mktemp("case1")))
    sid = wb.create_session()
    seed_case1_inputs(wb.store.artifacts_dir(sid))
    start = time.perf_counter()
    status = wb.send_message(sid, CASE1_PROMPT)
    elapsed = time.perf_counter() - start
    yield wb, sid, status, elapsed
    wb.close()


def test_case1_replay_builds_the_merged_phenotype_table(case1_session):
    with checklist("case study replay"):
        wb, sid, status, elapsed = case1_session
        assert status == "terminated"
        assert elapsed < 10.0

        merged = wb.store.artifacts_dir(sid) / "results/Case1/aracrop_phenotypes.csv"
        with open(merged, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 48
        assert len(PHENOTYPE_COLUMNS) == 8
        assert set(rows[0]) == METADATA_COLUMNS | set(PHENOTYPE_COLUMNS)

        metadata = json.loads(
            (wb.store.artifacts_dir(sid) / "data/aracrop_metadata.json").read_text()
        )
        assert sorted(r["file_name"] for r in rows) == sorted(m["file_name"] for m in metadata)
        by_name = {m["file_name"]: m for m in metadata}
        for row in rows:
            meta = by_name[row["file_name"]]
            assert row["ecotype"] == meta["ecotype"]
            assert int(row["plant_id"]) == meta["plant_id"]
            assert int(row["leaf_count"]) > 0

        assert validate_transcript(wb.store.events(sid)) == []


def test_case1_pipeline_summary_replays_byte_identically(case1_session):
    with checklist("pipeline capture and re-run"):
        wb, sid, _, _ = case1_session
        manifest = wb.save_pipeline(
            sid,
            "ara_crop_pipeline",
            parameterize={
                "metadata_path": "./data/aracrop_metadata.json",
                "output_dir": "./results/Case1",
                "pixel_to_cm": 0.03,
            },
            description="Segment the trays, measure the rosettes, merge with metadata.",
        )
        assert [s.kind for s in manifest.steps] == ["tool_call"] * 3 + ["script"]
        assert {p.name for p in manifest.params} == {"metadata_path", "output_dir", "pixel_to_cm"}

        replay_sid = wb.create_session()
        seed_case1_inputs(wb.store.artifacts_dir(replay_sid))
        _, report = wb.replay_pipeline("ara_crop_pipeline", {}, session_id=replay_sid)
        assert report.ok

        original = wb.store.artifacts_dir(sid) / "results/Case1/aracrop_phenotypes.csv"
        rerun = wb.store.artifacts_dir(replay_sid) / "results/Case1/aracrop_phenotypes.csv"
        assert rerun.read_bytes() == original.read_bytes()
        assert validate_transcript(wb.store.events(replay_sid)) == []


# ---------------------------------------------------------------------------
# 7. Benchmark suites: fixed replay rates, deterministic grading, live = report


def test_benchmark_suites_grade_at_the_recorded_rates(tmp_path):
    with checklist("benchmark suites in replay mode"):
        expected = {
            "tool_selection": (7, 10),
            "model_selection": (49, 50),
            "data_analysis": (10, 10),
        }
        for name, (passes, total) in expected.items():
            first = run_suite(load_suite(name), store_root=tmp_path / f"{name}_a")
            assert (first.passes, first.total) == (passes, total), name
            assert first.mode == "replay"
            second = run_suite(load_suite(name), store_root=tmp_path / f"{name}_b")
            assert second.to_csv() == first.to_csv(), name

        live_task = EvalTask(
            suite="tool_selection",
            id="live1",
            prompt="look at the model zoo",
            gold=[GoldStep(tool="get_model_zoo")],
            replay_turns=[],
        )
        provider = ReplayProvider([{"text": "Nothing I can do. TERMINATE"}])
        live = run_suite(
            EvalSuite(name="tool_selection", tasks=[live_task]),
            store_root=tmp_path / "live",
            provider=provider,
        )
        assert live.mode == "live"
        assert live.provider["class"] == "ReplayProvider"
        assert live.results[0].verdict in ("pass", "fail", "error")


# ---------------------------------------------------------------------------
# 8. Retrieval over a synthetic corpus with one planted fact per document


def test_planted_facts_are_recalled_in_the_top_three():
    with checklist("document retrieval recall"):
        start = time.perf_counter()
        docs = {}
        for i in range(20):
            filler = (
                f"Daily greenhouse journal, block {i}. Watering proceeded on schedule "
                "and the trays were rotated for even light. " * 2
            )
            docs[f"note{i:02d}"] = (
                filler + f"The tray {i} was sown with cultivar number {100 + i}."
            )
        store = RagStore(HashEmbedder())
        index_id = store.ingest(docs)

        found = 0
        for i in range(20):
            hits = store.query(index_id, f"which cultivar was sown in tray {i}?", k=3)
            assert len(hits) == 3
            if any(h.chunk.doc_id == f"note{i:02d}" for h in hits):
                found += 1
        assert found == 20
        assert time.perf_counter() - start < 2.0


# ---------------------------------------------------------------------------
# 9. Scripts cannot write outside their session directory


def test_escaping_scripts_abort_without_leaving_files(tmp_path):
    with checklist("script confinement"):
        workdir = tmp_path / "session"
        workdir.mkdir()
        outside = tmp_path / "outside"
        outside.mkdir()
        before = {p for p in tmp_path.rglob("*") if workdir not in p.parents and p != workdir}

        target = outside / "leak.txt"
        result = run_sandboxed(f"open({str(target)!r}, 'w').write('leak')\n", workdir)
        assert result.violation is not None
        with pytest.raises(SandboxViolation):
            raise_on_violation(result)

        relative = run_sandboxed("open('../leak2.txt', 'w').write('leak')\n", workdir)
        assert relative.violation is not None

        assert not target.exists()
        assert not (tmp_path / "leak2.txt").exists()
        after = {p for p in tmp_path.rglob("*") if workdir not in p.parents and p != workdir}
        assert after == before


# ---------------------------------------------------------------------------
# 10. Adapter protocol: golden suite green, invalid output leaves no artifact


def test_stub_adapter_conformance_and_no_partial_artifacts(tmp_path):
    with checklist("adapter protocol conformance"):
        bare = run_conformance(InProcessTransport(StubVisionAdapter()))
        assert bare.ok
        assert bare.failures == []

        write_png(tmp_path / "a.png", 48, 32)
        write_png(tmp_path / "b.png", 32, 32)
        images = resolve_image_inputs(["a.png", "b.png"], base_dir=tmp_path)
        full = run_conformance(InProcessTransport(StubVisionAdapter()), images=images)
        assert full.ok
        assert {"infer_schema", "infer_determinism"} <= set(full.passed)

        bad = make_jobs(adapter=ScriptedAdapter([{"annotations": []}]))
        img = write_png(tmp_path / "tray.png", 64, 64)
        out_dir = tmp_path / "out"
        with pytest.raises(AdapterOutputError):
            bad.infer_instance_segmentation(
                [str(img)], SEG_CKPT, out_dir, base_dir=tmp_path
            )
        assert not out_dir.exists()
