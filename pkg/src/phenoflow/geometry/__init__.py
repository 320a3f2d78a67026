"""Trait extraction from segmentation masks."""
from __future__ import annotations

from .coco import SegmentationSet, load_segmentation
from .traits import (
    PHENOTYPE_COLUMNS,
    PhenotypeRecord,
    compute_phenotypes,
    merge_with_metadata,
    write_phenotype_csv,
)

__all__ = [
    "SegmentationSet",
    "load_segmentation",
    "PHENOTYPE_COLUMNS",
    "PhenotypeRecord",
    "compute_phenotypes",
    "merge_with_metadata",
    "write_phenotype_csv",
]
