"""Classical fallback segmenter: green threshold plus connected components.

No learned model is involved. A pixel counts as plant when its green channel
clearly dominates both red and blue; each connected blob of plant pixels
becomes one instance. That is deliberately simple, but it is deterministic,
dependency-light, and good enough to drive the full phenotyping pipeline on
synthetic or well-lit tray images.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

# How much the green channel must exceed red and blue (0..255 scale).
GREEN_MARGIN = 12
# Blobs below this size are sensor speckle, not leaves.
MIN_PIXELS = 16

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def read_rgb(path: str | Path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"input image not found: {path}")
    try:
        with Image.open(p) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc


def plant_mask(rgb: np.ndarray, margin: int = GREEN_MARGIN) -> np.ndarray:
    """Boolean mask of green-dominant pixels."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected an RGB array, got shape {arr.shape}")
    r = arr[..., 0].astype(np.int16)
    g = arr[..., 1].astype(np.int16)
    b = arr[..., 2].astype(np.int16)
    return (g >= r + margin) & (g >= b + margin)


def split_instances(mask: np.ndarray, min_pixels: int = MIN_PIXELS) -> list[np.ndarray]:
    """One boolean mask per connected blob, diagonal contact counts as
    connected. Instances are ordered by their topmost-then-leftmost pixel so
    annotation ids do not depend on labelling internals."""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT_CONNECTED)
    instances = []
    for k in range(1, count + 1):
        blob = labels == k
        if int(blob.sum()) < min_pixels:
            continue
        first = np.argwhere(blob)[0]
        instances.append((int(first[0]), int(first[1]), blob))
    instances.sort(key=lambda item: (item[0], item[1]))
    return [blob for _, _, blob in instances]


def mask_to_rle(mask: np.ndarray) -> dict[str, Any]:
    """Column-major run lengths, first run counting background pixels."""
    arr = np.asarray(mask, dtype=bool)
    h, w = arr.shape
    flat = arr.flatten(order="F")
    counts: list[int] = []
    current, run = False, 0
    for value in flat:
        if value == current:
            run += 1
        else:
            counts.append(run)
            current, run = value, 1
    counts.append(run)
    return {"size": [int(h), int(w)], "counts": [int(c) for c in counts]}


def segment_entries(entries: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Run the fallback segmenter over image entries and emit one COCO-style
    document: ``images`` with ids in input order, ``annotations`` with RLE
    masks. Entries need ``file_name`` and ``path``; recorded dimensions come
    from the decoded pixels, not from the caller."""
    doc: dict[str, Any] = {"images": [], "annotations": []}
    ann_id = 1
    for image_id, entry in enumerate(entries, start=1):
        file_name = entry.get("file_name")
        path = entry.get("path") or file_name
        if not file_name or not path:
            raise ValueError(f"bad image entry: {entry!r}")
        rgb = read_rgb(path)
        h, w = rgb.shape[0], rgb.shape[1]
        doc["images"].append(
            {"id": image_id, "file_name": str(file_name), "width": w, "height": h}
        )
        for blob in split_instances(plant_mask(rgb)):
            doc["annotations"].append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": 1,
                    "segmentation": mask_to_rle(blob),
                }
            )
            ann_id += 1
    return doc
