"""Shape traits per image from a segmentation set, plus metadata merging.

Traits are computed once in pixel units and converted afterwards: areas scale
with the square of the pixel size, lengths scale linearly, and the two
dimensionless ratios (compactness, stockiness) are taken straight from the
pixel-unit quantities so they are identical bit for bit at every scale.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from shapely.geometry import MultiPolygon, Polygon
from shapely.ops import unary_union

from ..errors import ValidationError
from . import descriptors as desc
from .coco import Instance, SegmentationSet, polygon_to_mask

log = logging.getLogger(__name__)

PHENOTYPE_COLUMNS = [
    "file_name",
    "leaf_count",
    "average_leaf_area",
    "projected_leaf_area",
    "diameter",
    "perimeter",
    "compactness",
    "stockiness",
]


@dataclass
class PhenotypeRecord:
    file_name: str
    leaf_count: int
    average_leaf_area: float | None
    projected_leaf_area: float | None
    diameter: float | None
    perimeter: float | None
    compactness: float | None
    stockiness: float | None

    def as_dict(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in PHENOTYPE_COLUMNS}


@dataclass
class _PixelTraits:
    """Trait ingredients in pixel units, before the scale is applied."""

    count: int
    union_area: float
    mean_instance_area: float
    diameter: float
    perimeter: float
    compactness: float
    stockiness: float


def _shapely_poly(parts: Sequence[Sequence[tuple[float, float]]]) -> Polygon | MultiPolygon:
    polys = [Polygon(part).buffer(0) for part in parts]
    if len(polys) == 1:
        return polys[0]
    return unary_union(polys)


def _instance_area(inst: Instance) -> float:
    if inst.is_raster:
        return float(inst.mask.sum())
    if len(inst.polygons) == 1:
        return desc.polygon_area(inst.polygons[0])
    return float(_shapely_poly(inst.polygons).area)


def _dimensionless(union_area: float, hull_area: float, perimeter: float) -> tuple[float, float]:
    """(compactness, stockiness) with the degenerate rules applied."""
    if perimeter <= 0.0:
        stockiness = 0.0
    else:
        stockiness = 4.0 * math.pi * union_area / (perimeter * perimeter)
    if hull_area <= 0.0:
        compactness = 1.0
    else:
        compactness = min(union_area / hull_area, 1.0)
    return compactness, stockiness


def _polygon_traits(instances: list[Instance]) -> _PixelTraits:
    areas = [_instance_area(inst) for inst in instances]
    shapes = [_shapely_poly(inst.polygons) for inst in instances]
    overlapping = False
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            if shapes[i].intersects(shapes[j]) and shapes[i].intersection(shapes[j]).area > 0:
                overlapping = True
                break
        if overlapping:
            break
    if not overlapping:
        union_area = float(sum(areas))
        perimeter = 0.0
        for inst in instances:
            shape = _shapely_poly(inst.polygons)
            if isinstance(shape, MultiPolygon):
                perimeter += sum(g.exterior.length for g in shape.geoms)
            else:
                perimeter += shape.exterior.length
    else:
        union = unary_union(shapes)
        union_area = float(union.area)
        geoms = union.geoms if isinstance(union, MultiPolygon) else [union]
        perimeter = float(sum(g.exterior.length for g in geoms))

    all_points = [pt for inst in instances for part in inst.polygons for pt in part]
    hull = desc.convex_hull(all_points)
    hull_area = desc.polygon_area(hull) if len(hull) >= 3 else 0.0
    diameter = desc.hull_diameter(hull)
    compactness, stockiness = _dimensionless(union_area, hull_area, perimeter)
    return _PixelTraits(
        count=len(instances),
        union_area=union_area,
        mean_instance_area=float(sum(areas) / len(areas)),
        diameter=diameter,
        perimeter=perimeter,
        compactness=compactness,
        stockiness=stockiness,
    )


def _raster_traits(instances: list[Instance], height: int, width: int) -> _PixelTraits:
    masks = []
    areas = []
    for inst in instances:
        if inst.is_raster:
            m = inst.mask
        else:
            m = polygon_to_mask(inst.polygons, height, width)
        masks.append(m)
        areas.append(float(m.sum()))
    union = np.zeros((height, width), dtype=bool)
    for m in masks:
        union |= m
    union_area = float(union.sum())

    bp = desc.boundary_pixels(union)
    if len(bp) <= 2:
        centre_pts = [(float(c), float(r)) for r, c in bp]
        diameter = desc.diameter_of_points(centre_pts) if len(bp) == 2 else 0.0
        compactness, stockiness = _dimensionless(union_area, 0.0, 0.0)
        return _PixelTraits(
            count=len(instances),
            union_area=union_area,
            mean_instance_area=float(sum(areas) / len(areas)),
            diameter=diameter,
            perimeter=0.0,
            compactness=compactness,
            stockiness=stockiness,
        )

    centre_pts = [(float(c), float(r)) for r, c in bp]
    diameter = desc.diameter_of_points(centre_pts)
    corner_pts: list[tuple[float, float]] = []
    for r, c in bp:
        corner_pts.extend(
            ((c - 0.5, r - 0.5), (c + 0.5, r - 0.5), (c - 0.5, r + 0.5), (c + 0.5, r + 0.5))
        )
    hull = desc.convex_hull(corner_pts)
    hull_area = desc.polygon_area(hull) if len(hull) >= 3 else 0.0
    perimeter = desc.raster_perimeter(union)
    compactness, stockiness = _dimensionless(union_area, hull_area, perimeter)
    return _PixelTraits(
        count=len(instances),
        union_area=union_area,
        mean_instance_area=float(sum(areas) / len(areas)),
        diameter=diameter,
        perimeter=perimeter,
        compactness=compactness,
        stockiness=stockiness,
    )


def compute_phenotypes(
    segmentation: SegmentationSet, pixel_to_cm: float = 1.0
) -> list[PhenotypeRecord]:
    """Per-image trait records, ordered by file_name.

    ``pixel_to_cm`` is the side length of one pixel in centimetres; 1.0 keeps
    everything in pixel units. Images without instances produce a record with
    leaf_count 0 and null traits.
    """
    if not isinstance(pixel_to_cm, (int, float)) or not math.isfinite(pixel_to_cm):
        raise ValidationError("pixel_to_cm must be a finite number")
    if pixel_to_cm <= 0:
        raise ValidationError("pixel_to_cm must be positive")
    s = float(pixel_to_cm)

    records: list[PhenotypeRecord] = []
    for info in segmentation.images:
        instances = segmentation.for_image(info.id)
        if not instances:
            records.append(
                PhenotypeRecord(info.file_name, 0, None, None, None, None, None, None)
            )
            continue
        if any(inst.is_raster for inst in instances):
            px = _raster_traits(instances, info.height, info.width)
        else:
            px = _polygon_traits(instances)
        records.append(
            PhenotypeRecord(
                file_name=info.file_name,
                leaf_count=px.count,
                average_leaf_area=px.mean_instance_area * s * s,
                projected_leaf_area=px.union_area * s * s,
                diameter=px.diameter * s,
                perimeter=px.perimeter * s,
                compactness=px.compactness,
                stockiness=px.stockiness,
            )
        )
    records.sort(key=lambda r: r.file_name)
    return records


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_phenotype_csv(records: Iterable[PhenotypeRecord], path: str | Path) -> Path:
    """Write records with the canonical column order; floats get 6 significant digits."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PHENOTYPE_COLUMNS)
        for rec in records:
            d = rec.as_dict()
            writer.writerow([_format_value(d[c]) for c in PHENOTYPE_COLUMNS])
    return p


def merge_with_metadata(
    records: Sequence[PhenotypeRecord | dict[str, Any]],
    metadata: Sequence[dict[str, Any]],
    key: str = "file_name",
) -> tuple[list[dict[str, Any]], list[str]]:
    """Inner join of trait records with a metadata table on ``key``.

    Returns (merged rows, warnings). Duplicate keys on either side and an
    empty join are errors; unmatched rows on either side are warned about and
    dropped. Merged columns are the record columns followed by the metadata
    columns (minus the join key).
    """
    rec_dicts = [r.as_dict() if isinstance(r, PhenotypeRecord) else dict(r) for r in records]
    for row in rec_dicts:
        if key not in row:
            raise ValidationError(f"record missing join key {key!r}")
    meta_dicts = [dict(m) for m in metadata]
    for row in meta_dicts:
        if key not in row:
            raise ValidationError(f"metadata row missing join key {key!r}")

    def _index(rows: list[dict[str, Any]], side: str) -> dict[Any, dict[str, Any]]:
        out: dict[Any, dict[str, Any]] = {}
        for row in rows:
            k = row[key]
            if k in out:
                raise ValidationError(f"duplicate {key!r} {k!r} in {side}")
            out[k] = row
        return out

    left = _index(rec_dicts, "records")
    right = _index(meta_dicts, "metadata")
    shared = [k for k in left if k in right]
    if not shared:
        raise ValidationError(f"merge produced no rows: no {key!r} values in common")

    warnings: list[str] = []
    left_only = [k for k in left if k not in right]
    right_only = [k for k in right if k not in left]
    if left_only:
        warnings.append(f"{len(left_only)} record(s) had no metadata match: {left_only[:5]}")
    if right_only:
        warnings.append(f"{len(right_only)} metadata row(s) had no record match: {right_only[:5]}")
    for w in warnings:
        log.warning(w)

    merged = []
    for k in shared:
        row = dict(left[k])
        for col, val in right[k].items():
            if col != key:
                row[col] = val
        merged.append(row)
    return merged, warnings
