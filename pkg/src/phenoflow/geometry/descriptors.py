"""Planar shape descriptors shared by the polygon and raster trait paths.

Polygons are measured analytically (shoelace area, exact convex hull,
rotating-calipers diameter). Rasters are measured on the pixel grid: area by
pixel count, perimeter from a Moore-traced outer contour with the
Vossepoel-Smeulders chain-length correction, diameter over boundary pixel
centres and hull area over boundary pixel corners.
"""
from __future__ import annotations

import math
from collections import deque
from typing import Iterable, Sequence

import numpy as np

Point = tuple[float, float]

# Vossepoel-Smeulders coefficients: axis steps, diagonal steps, corner count.
_VS_EVEN = 0.980
_VS_ODD = 1.406
_VS_CORNER = -0.091

# Moore neighbourhood in clockwise order starting from west, as (dr, dc).
# Even indices are axis moves, odd indices are diagonal moves.
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]


def polygon_area(points: Sequence[Point]) -> float:
    """Absolute shoelace area of a simple polygon."""
    n = len(points)
    acc = 0.0
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def polygon_perimeter(points: Sequence[Point]) -> float:
    """Length of the closed boundary through ``points`` in order."""
    n = len(points)
    acc = 0.0
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        acc += math.hypot(x2 - x1, y2 - y1)
    return acc


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[Point]) -> list[Point]:
    """Convex hull (counter-clockwise, no duplicate endpoint), monotone chain.

    Collinear input collapses to a 1- or 2-point hull.
    """
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        return pts[:2]
    return hull


def hull_diameter(hull: Sequence[Point]) -> float:
    """Maximum pairwise distance over a convex polygon via rotating calipers."""
    n = len(hull)
    if n <= 1:
        return 0.0
    if n == 2:
        return math.dist(hull[0], hull[1])
    best = 0.0
    j = 1
    for i in range(n):
        ni = (i + 1) % n
        while True:
            nj = (j + 1) % n
            edge = (hull[ni][0] - hull[i][0], hull[ni][1] - hull[i][1])
            adv = (hull[nj][0] - hull[j][0], hull[nj][1] - hull[j][1])
            if edge[0] * adv[1] - edge[1] * adv[0] > 0:
                j = nj
            else:
                break
        best = max(best, math.dist(hull[i], hull[j]), math.dist(hull[ni], hull[j]))
    return best


def diameter_of_points(points: Iterable[Point]) -> float:
    """Maximum pairwise distance over an arbitrary point set."""
    return hull_diameter(convex_hull(points))


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbour outside the mask.

    Returns an (n, 2) array of (row, col) indices.
    """
    m = mask.astype(bool)
    if not m.any():
        return np.empty((0, 2), dtype=np.int64)
    padded = np.pad(m, 1)
    inner = (
        padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    edge = m & ~inner
    return np.argwhere(edge)


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of a boolean mask, each as (n, 2) indices."""
    m = mask.astype(bool)
    visited = np.zeros_like(m)
    comps: list[np.ndarray] = []
    h, w = m.shape
    for r0, c0 in np.argwhere(m):
        if visited[r0, c0]:
            continue
        q: deque[tuple[int, int]] = deque([(int(r0), int(c0))])
        visited[r0, c0] = True
        acc = []
        while q:
            r, c = q.popleft()
            acc.append((r, c))
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and m[rr, cc] and not visited[rr, cc]:
                        visited[rr, cc] = True
                        q.append((rr, cc))
        comps.append(np.array(acc, dtype=np.int64))
    return comps


def trace_outer_contour(mask: np.ndarray, start: tuple[int, int]) -> list[int]:
    """Chain codes (indices into the Moore ring) of one closed outer contour.

    Moore-neighbour tracing from the component's topmost-leftmost pixel. The
    walk is a deterministic function of the (pixel, backtrack) state, so it is
    run until a state repeats and the periodic part is returned. An isolated
    pixel yields an empty chain.
    """
    h, w = mask.shape

    def at(r: int, c: int) -> bool:
        return 0 <= r < h and 0 <= c < w and bool(mask[r, c])

    seen: dict[tuple[int, int, int], int] = {}
    chain: list[int] = []
    p = start
    back = 0  # arrived from the west, which is background at the start pixel
    while (p[0], p[1], back) not in seen:
        seen[(p[0], p[1], back)] = len(chain)
        move = -1
        for k in range(1, 9):
            d = (back + k) % 8
            rr, cc = p[0] + _MOORE[d][0], p[1] + _MOORE[d][1]
            if at(rr, cc):
                move = d
                prev_bg = (back + k - 1) % 8
                bg = (p[0] + _MOORE[prev_bg][0], p[1] + _MOORE[prev_bg][1])
                p = (rr, cc)
                back = _MOORE.index((bg[0] - p[0], bg[1] - p[1]))
                break
        if move < 0:
            return []
        chain.append(move)
    cycle_from = seen[(p[0], p[1], back)]
    return chain[cycle_from:]


def chain_perimeter(chain: Sequence[int]) -> float:
    """Vossepoel-Smeulders corrected length of a closed chain code."""
    if not chain:
        return 0.0
    n_even = sum(1 for d in chain if d % 2 == 0)
    n_odd = len(chain) - n_even
    closed = list(chain) + [chain[0]]
    corners = sum(1 for a, b in zip(closed, closed[1:]) if a != b)
    length = _VS_EVEN * n_even + _VS_ODD * n_odd + _VS_CORNER * corners
    return max(length, 0.0)


def raster_perimeter(mask: np.ndarray) -> float:
    """Total outer-contour perimeter over all components of ``mask``.

    Components of one or two pixels are treated as degenerate and contribute
    nothing, matching the degenerate-plant rule in the trait definitions.
    """
    total = 0.0
    for comp in connected_components(mask):
        if len(comp) <= 2:
            continue
        sub = np.zeros(mask.shape, dtype=bool)
        sub[comp[:, 0], comp[:, 1]] = True
        order = np.lexsort((comp[:, 1], comp[:, 0]))
        start = (int(comp[order[0], 0]), int(comp[order[0], 1]))
        total += chain_perimeter(trace_outer_contour(sub, start))
    return total
