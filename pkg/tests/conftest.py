"""Shared helpers: a tiny PNG writer, rosette dataset seeding, workbench factory."""
from __future__ import annotations

import json
import struct
import zlib
from importlib import resources
from pathlib import Path

import pytest

from phenoflow.app import Workbench

ASSETS = resources.files("phenoflow.assets")

ECOTYPES = ("col-0", "ctr1", "ein2")

CASE1_PROMPT = """I have an image dataset consisting of 24 Arabidopsis plants associated with different ecotypes. Each plant has multiple images taken at different days after sowing.
The metadata for the dataset is stored in ./data/aracrop_metadata.json. The metadata contains the following keys for each image: file_name, plant_id, ecotype, and days_after_sowing.
Your task is to compute the following phenotypes for each image, the pixel to cm mapping scale is 0.03:
1. leaf count
2. projected leaf area (PLA)
3. average leaf area
4. diameter of the whole plant
5. perimeter of the whole plant
6. compactness of the whole plant
7. stokinness of the whole plant

Merge the computed phenotypes with the metadata information and save them in ./results/Case1/aracrop_phenotypes.csv. Make sure the file names match."""


def write_png(path: str | Path, width: int, height: int, rgb=(40, 160, 60)) -> Path:
    """Write a solid-colour 8-bit RGB PNG without pulling in an imaging library."""

    def chunk(tag: bytes, data: bytes) -> bytes:
        c = struct.pack(">I", len(data)) + tag + data
        return c + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    raw = b"".join(b"\x00" + bytes(rgb) * width for _ in range(height))
    out = Path(path)
    out.write_bytes(
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )
    return out


def seed_case1_inputs(workdir: Path) -> list[dict]:
    """Create 48 tray images (24 plants x 2 days) plus their metadata file."""
    data = workdir / "data"
    data.mkdir(parents=True, exist_ok=True)
    records = []
    for plant in range(1, 25):
        for day in (7, 14):
            name = f"plant{plant:02d}_d{day:02d}.png"
            write_png(data / name, 64, 64)
            records.append(
                {
                    "file_name": name,
                    "plant_id": plant,
                    "ecotype": ECOTYPES[(plant - 1) % len(ECOTYPES)],
                    "days_after_sowing": day,
                }
            )
    (data / "aracrop_metadata.json").write_text(json.dumps(records, indent=2) + "\n")
    return records


def case1_config(root: Path, **overrides) -> dict[str, str]:
    config = {
        "store_root": str(root / "sessions"),
        "pipeline_dir": str(root / "pipelines"),
        "model_zoo": str(ASSETS / "case1_model_zoo.json"),
        "provider": "replay",
        "replay_file": str(ASSETS / "case1_replay.json"),
        "adapter": "stub",
        "approval_mode": "auto",
    }
    config.update(overrides)
    return config


@pytest.fixture
def make_workbench(tmp_path):
    """Factory for isolated Workbench instances rooted under tmp_path."""
    made: list[Workbench] = []

    def factory(**overrides) -> Workbench:
        wb = Workbench(case1_config(tmp_path / f"wb{len(made)}", **overrides))
        made.append(wb)
        return wb

    yield factory
    for wb in made:
        wb.close()
