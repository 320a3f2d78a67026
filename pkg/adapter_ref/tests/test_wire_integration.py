"""The adapter against its consumer, strictly over the subprocess wire.

These tests drive the adapter the way the workbench does: a child process
speaking newline-delimited JSON. The workbench package is used only on the
client side of the wire, as the conformance runner and the downstream
consumer of the segmentation output.
"""
from __future__ import annotations

import math
import sys

import pytest

phenoflow = pytest.importorskip("phenoflow")

from conftest import write_rosette  # noqa: E402
from phenoflow.geometry import compute_phenotypes  # noqa: E402
from phenoflow.geometry.coco import parse_segmentation  # noqa: E402
from phenoflow.vision import (  # noqa: E402
    AdapterClient,
    SubprocessTransport,
    resolve_image_inputs,
    run_conformance,
)

ADAPTER_CMD = [sys.executable, "-m", "phenoflow_adapter"]


def test_passes_the_conformance_suite_over_stdio(tmp_path):
    write_rosette(tmp_path / "c1.png")
    write_rosette(tmp_path / "c2.png", disks=((40, 40, 16),))
    images = resolve_image_inputs(["c1.png", "c2.png"], base_dir=tmp_path)
    with SubprocessTransport(ADAPTER_CMD) as transport:
        report = run_conformance(transport, images)
    assert report.ok, report.failures
    assert {"infer_schema", "infer_determinism"} <= set(report.passed)


def test_fallback_masks_feed_the_phenotype_pipeline(tmp_path):
    disks = ((30, 30, 12), (62, 58, 10))
    write_rosette(tmp_path / "tray.png", disks=disks)
    images = resolve_image_inputs(["tray.png"], base_dir=tmp_path)
    with SubprocessTransport(ADAPTER_CMD) as transport:
        client = AdapterClient(transport)
        assert "segment" in client.capabilities()
        payload = client.request(
            "infer",
            {
                "task": "instance_segmentation",
                "checkpoint": "fallback",
                "images": [im.wire() for im in images],
            },
        )

    records = compute_phenotypes(parse_segmentation(payload))
    assert len(records) == 1
    rec = records[0]
    assert rec.leaf_count == len(disks)
    expected_area = sum(math.pi * r * r for _, _, r in disks)
    assert abs(rec.projected_leaf_area - expected_area) / expected_area < 0.05
    assert 0 < rec.stockiness <= 1.02
