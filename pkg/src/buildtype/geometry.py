"""Planar geometry for footprint polygons and raster zonal statistics.

All routines take geometry in the shape produced by geodata.parse_footprints:
a list of parts, each part a list of closed rings (exterior first), each ring
a closed list of (x, y) tuples in projected meters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRing, NoCellsCovered
from .geodata import DemGrid, Ring


@dataclass
class ZonalStats:
    """Statistics of DEM cells whose centers fall inside one footprint.

    ``std`` is the population (divide-by-n) standard deviation, so a
    single-cell zone has std exactly 0.
    """

    mean: float
    max: float
    std: float
    count: int


def _check_ring(ring: Ring) -> None:
    if len(ring) < 4:
        raise DegenerateRing(f"ring has {len(ring)} points, need >= 4")


def _shoelace(ring: Ring) -> float:
    """Signed shoelace area of a closed ring (positive if counterclockwise)."""
    _check_ring(ring)
    area = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        area += x1 * y2 - x2 * y1
    return 0.5 * area


def polygon_area_sqm(parts: list[list[Ring]]) -> float:
    """Area in square meters: exterior rings minus their holes, over all parts."""
    total = 0.0
    for part in parts:
        total += abs(_shoelace(part[0]))
        for hole in part[1:]:
            total -= abs(_shoelace(hole))
    return total


def node_count(parts: list[list[Ring]], include_holes: bool = False) -> int:
    """Number of footprint outline vertices (closing vertex not counted).

    Hole-ring vertices are excluded by default; pass include_holes=True to
    count them as well.
    """
    total = 0
    for part in parts:
        _check_ring(part[0])
        total += len(part[0]) - 1
        if include_holes:
            for hole in part[1:]:
                _check_ring(hole)
                total += len(hole) - 1
    return total


def _ring_crossings(pt: tuple[float, float], ring: Ring) -> int:
    """Count crossings of the eastward ray from pt with one ring's edges.

    Each edge is treated half-open in y (ymin <= y < ymax) so a ray through
    a shared vertex or shared edge is counted deterministically.
    """
    x, y = pt
    crossings = 0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (y1 <= y < y2) or (y2 <= y < y1):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                crossings += 1
    return crossings


def point_in_polygon(pt: tuple[float, float], parts: list[list[Ring]]) -> bool:
    """Even-odd containment test; points inside a hole are outside."""
    for part in parts:
        crossings = 0
        for ring in part:
            _check_ring(ring)
            crossings += _ring_crossings(pt, ring)
        if crossings % 2 == 1:
            return True
    return False


def _bounds(parts: list[list[Ring]]) -> tuple[float, float, float, float]:
    xs = [x for part in parts for x, _ in part[0]]
    ys = [y for part in parts for _, y in part[0]]
    return min(xs), min(ys), max(xs), max(ys)


def zonal_stats(grid: DemGrid, parts: list[list[Ring]]) -> ZonalStats:
    """Mean/max/std/count of non-nodata cells whose centers lie in the footprint.

    Only cells inside the geometry's bounding box are visited. Raises
    NoCellsCovered when no valid cell center falls inside.
    """
    xmin, ymin, xmax, ymax = _bounds(parts)
    cs = grid.cellsize
    # Columns whose center x = xll + (col + 0.5) * cs lies in [xmin, xmax],
    # widened by one cell so rounding at the box edge can never exclude a
    # center the containment test would accept.
    col_lo = max(0, int(np.ceil((xmin - grid.xll) / cs - 0.5)) - 1)
    col_hi = min(grid.ncols - 1, int(np.floor((xmax - grid.xll) / cs - 0.5)) + 1)
    # Row r has center y = yll + (nrows - r - 0.5) * cs, decreasing in r.
    row_lo = max(0, int(np.ceil(grid.nrows - (ymax - grid.yll) / cs - 0.5)) - 1)
    row_hi = min(grid.nrows - 1, int(np.floor(grid.nrows - (ymin - grid.yll) / cs - 0.5)) + 1)

    included = []
    for row in range(row_lo, row_hi + 1):
        y = grid.yll + (grid.nrows - row - 0.5) * cs
        for col in range(col_lo, col_hi + 1):
            value = grid.values[row, col]
            if value == grid.nodata:
                continue
            x = grid.xll + (col + 0.5) * cs
            if point_in_polygon((x, y), parts):
                included.append(value)

    if not included:
        raise NoCellsCovered("no valid cell center inside geometry")
    arr = np.array(included, dtype=np.float64)
    return ZonalStats(
        mean=float(np.mean(arr)),
        max=float(np.max(arr)),
        std=float(np.std(arr)),
        count=len(arr),
    )
