"""Shared fixture: synthetic rosette images, green disks on a soil background."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

SOIL = (110, 84, 58)
LEAF = (52, 150, 70)


def rosette_array(size=96, disks=((30, 30, 12), (62, 58, 10))) -> np.ndarray:
    arr = np.full((size, size, 3), SOIL, dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    for cy, cx, r in disks:
        arr[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = LEAF
    return arr


def write_rosette(path: str | Path, size=96, disks=((30, 30, 12), (62, 58, 10))) -> Path:
    out = Path(path)
    Image.fromarray(rosette_array(size, disks)).save(out)
    return out
