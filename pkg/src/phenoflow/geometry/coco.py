"""COCO-style segmentation loading: polygons and run-length masks.

Only the pieces of the COCO format that instance segmentation results use are
supported: an ``images`` list and an ``annotations`` list whose
``segmentation`` entries are either polygons (lists of flat vertex lists) or
run-length encodings. RLE counts may be an uncompressed integer list or the
compressed string form (5-bit chunks, delta-coded from the fourth count on).
Everything is decoded and validated at load time so later stages can assume a
well-formed set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..errors import ValidationError

Point = tuple[float, float]


@dataclass
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass
class Instance:
    """One segmented object: either polygon parts or a decoded raster mask."""

    image_id: int
    polygons: list[list[Point]] = field(default_factory=list)
    mask: np.ndarray | None = None
    category_id: int | None = None
    score: float | None = None

    @property
    def is_raster(self) -> bool:
        return self.mask is not None


@dataclass
class SegmentationSet:
    images: list[ImageInfo]
    instances: dict[int, list[Instance]]

    def for_image(self, image_id: int) -> list[Instance]:
        return self.instances.get(image_id, [])


def decode_rle_counts(counts: str | Sequence[int]) -> list[int]:
    """Expand RLE counts to a plain integer list.

    String counts use the compressed scheme: each value is stored little-end
    first in 5-bit chunks (character = chunk + 48, bit 0x20 continues, bit
    0x10 of the final chunk sign-extends). Values at index 3 and beyond are
    stored as deltas against the value two positions back.
    """
    if not isinstance(counts, str):
        out = [int(c) for c in counts]
        if any(c < 0 for c in out):
            raise ValidationError("rle counts must be non-negative")
        return out
    out = []
    pos = 0
    n = len(counts)
    while pos < n:
        x = 0
        k = 0
        while True:
            if pos >= n:
                raise ValidationError("truncated rle counts string")
            c = ord(counts[pos]) - 48
            if c < 0 or c > 63:
                raise ValidationError("invalid character in rle counts string")
            x |= (c & 0x1F) << (5 * k)
            pos += 1
            k += 1
            if not (c & 0x20):
                if c & 0x10:
                    x |= -1 << (5 * k)
                break
        if len(out) > 2:
            x += out[-2]
        if x < 0:
            raise ValidationError("rle counts decoded to a negative run")
        out.append(x)
    return out


def encode_rle_counts(counts: Sequence[int]) -> str:
    """Inverse of :func:`decode_rle_counts` for the compressed string form."""
    s = []
    vals = [int(c) for c in counts]
    for i, v in enumerate(vals):
        x = v - vals[i - 2] if i > 2 else v
        while True:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            s.append(chr(c + 48))
            if not more:
                break
    return "".join(s)


def rle_to_mask(rle: dict[str, Any]) -> np.ndarray:
    """Decode an RLE dict ({'size': [h, w], 'counts': ...}) to a bool mask.

    Runs alternate background/foreground starting with background and fill
    the mask in column-major order, as COCO defines.
    """
    size = rle.get("size")
    if (
        not isinstance(size, (list, tuple))
        or len(size) != 2
        or not all(isinstance(v, int) and v > 0 for v in size)
    ):
        raise ValidationError("rle size must be [height, width] of positive ints")
    h, w = size
    counts = decode_rle_counts(rle.get("counts", []))
    total = sum(counts)
    if total != h * w:
        raise ValidationError(
            f"rle counts sum to {total}, expected {h * w} for size {h}x{w}"
        )
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    val = False
    for run in counts:
        if val:
            flat[pos : pos + run] = True
        pos += run
        val = not val
    return flat.reshape((w, h)).T


def mask_to_rle(mask: np.ndarray, compress: bool = True) -> dict[str, Any]:
    """Encode a bool mask as a COCO RLE dict (column-major runs)."""
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).T.reshape(-1)
    counts = []
    run_val = False
    run_len = 0
    for v in flat:
        if v == run_val:
            run_len += 1
        else:
            counts.append(run_len)
            run_val = v
            run_len = 1
    counts.append(run_len)
    out: str | list[int] = encode_rle_counts(counts) if compress else counts
    return {"size": [h, w], "counts": out}


def polygon_to_mask(polygons: Sequence[Sequence[Point]], height: int, width: int) -> np.ndarray:
    """Rasterize polygon parts: a pixel is set when its centre lies inside.

    Even-odd rule per part, parts combined by union. Used when an image mixes
    polygon and RLE instances and everything must land on one grid.
    """
    mask = np.zeros((height, width), dtype=bool)
    cx = np.arange(width) + 0.5
    for part in polygons:
        xs = np.array([p[0] for p in part])
        ys = np.array([p[1] for p in part])
        n = len(part)
        ymin = max(int(np.floor(ys.min())), 0)
        ymax = min(int(np.ceil(ys.max())), height)
        for row in range(ymin, ymax):
            py = row + 0.5
            inside = np.zeros(width, dtype=bool)
            j = n - 1
            for i in range(n):
                yi, yj = ys[i], ys[j]
                if (yi > py) != (yj > py):
                    x_at = xs[i] + (py - yi) / (yj - yi) * (xs[j] - xs[i])
                    inside ^= cx < x_at
                j = i
            mask[row] |= inside
    return mask


def _parse_polygon(flat: Sequence[float], width: int, height: int) -> list[Point]:
    if len(flat) < 6 or len(flat) % 2 != 0:
        raise ValidationError("polygon needs an even coordinate count and >= 3 vertices")
    pts = [(float(flat[i]), float(flat[i + 1])) for i in range(0, len(flat), 2)]
    for x, y in pts:
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            raise ValidationError(
                f"polygon vertex ({x}, {y}) lies outside the {width}x{height} image"
            )
    return pts


def parse_segmentation(doc: dict[str, Any]) -> SegmentationSet:
    """Validate a COCO-style dict and decode every annotation."""
    if not isinstance(doc, dict):
        raise ValidationError("segmentation document must be a JSON object")
    images_raw = doc.get("images")
    anns_raw = doc.get("annotations")
    if not isinstance(images_raw, list) or not isinstance(anns_raw, list):
        raise ValidationError("segmentation document needs 'images' and 'annotations' lists")

    images: list[ImageInfo] = []
    by_id: dict[int, ImageInfo] = {}
    for entry in images_raw:
        try:
            info = ImageInfo(
                id=int(entry["id"]),
                file_name=str(entry["file_name"]),
                width=int(entry["width"]),
                height=int(entry["height"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed image entry: {entry!r}") from exc
        if info.width <= 0 or info.height <= 0:
            raise ValidationError(f"image {info.id} has non-positive dimensions")
        if info.id in by_id:
            raise ValidationError(f"duplicate image id {info.id}")
        by_id[info.id] = info
        images.append(info)

    instances: dict[int, list[Instance]] = {info.id: [] for info in images}
    for ann in anns_raw:
        if not isinstance(ann, dict):
            raise ValidationError("annotation entries must be objects")
        image_id = ann.get("image_id")
        if image_id not in by_id:
            raise ValidationError(f"annotation references unknown image id {image_id}")
        info = by_id[image_id]
        seg = ann.get("segmentation")
        score = ann.get("score")
        if score is not None:
            score = float(score)
            if not (0.0 <= score <= 1.0):
                raise ValidationError(f"score {score} outside [0, 1]")
        category = ann.get("category_id")
        if isinstance(seg, dict):
            mask = rle_to_mask(seg)
            if mask.shape != (info.height, info.width):
                raise ValidationError(
                    f"rle size {mask.shape} does not match image {image_id} "
                    f"({info.height}x{info.width})"
                )
            inst = Instance(image_id=image_id, mask=mask, category_id=category, score=score)
        elif isinstance(seg, list) and seg:
            parts = [_parse_polygon(part, info.width, info.height) for part in seg]
            inst = Instance(image_id=image_id, polygons=parts, category_id=category, score=score)
        else:
            raise ValidationError(
                f"annotation for image {image_id} has no usable segmentation"
            )
        instances[image_id].append(inst)

    return SegmentationSet(images=images, instances=instances)


def load_segmentation(path: str | Path) -> SegmentationSet:
    """Load and validate a segmentation result file."""
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"segmentation file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"segmentation file is not valid JSON: {exc}") from exc
    return parse_segmentation(doc)
