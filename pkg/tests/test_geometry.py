import numpy as np
import pytest

from buildtype.errors import DegenerateRing, NoCellsCovered
from buildtype.geodata import DemGrid
from buildtype.geometry import (
    ZonalStats,
    node_count,
    point_in_polygon,
    polygon_area_sqm,
    zonal_stats,
)

UNIT_SQUARE = [[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]]


def square_ring(x0, y0, side):
    return [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side), (x0, y0)]


def holed_square():
    # 10x10 exterior with a 2x2 hole
    return [[square_ring(0, 0, 10), square_ring(4, 4, 2)]]


def star_polygon(rng, n_vertices, cx=0.0, cy=0.0, rmin=0.5, rmax=5.0):
    """Random star-convex polygon: simple by construction."""
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n_vertices))
    radii = rng.uniform(rmin, rmax, size=n_vertices)
    pts = [(cx + r * np.cos(a), cy + r * np.sin(a)) for a, r in zip(angles, radii)]
    return pts + [pts[0]]


def brute_force_zonal(grid, parts):
    """Oracle: test every cell of the grid, no bounding-box shortcut."""
    included = []
    for row in range(grid.nrows):
        for col in range(grid.ncols):
            value = grid.values[row, col]
            if value == grid.nodata:
                continue
            x = grid.xll + (col + 0.5) * grid.cellsize
            y = grid.yll + (grid.nrows - row - 0.5) * grid.cellsize
            if point_in_polygon((x, y), parts):
                included.append(value)
    if not included:
        return None
    arr = np.array(included)
    return ZonalStats(mean=float(np.mean(arr)), max=float(np.max(arr)),
                      std=float(np.std(arr)), count=len(arr))


class TestPolygonArea:
    def test_unit_square(self):
        assert polygon_area_sqm([UNIT_SQUARE]) == 1.0

    def test_triangle_shoelace_by_hand(self):
        # 0.5 * |4*3| = 6.0
        tri = [(0.0, 0.0), (4.0, 0.0), (0.0, 3.0), (0.0, 0.0)]
        assert polygon_area_sqm([[tri]]) == 6.0

    def test_holed_square(self):
        # 100 - 4 by hand
        assert polygon_area_sqm(holed_square()) == 96.0

    def test_degenerate_ring(self):
        with pytest.raises(DegenerateRing):
            polygon_area_sqm([[[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]]])

    def test_rotation_and_orientation_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            ring = star_polygon(rng, int(rng.integers(3, 11)))
            base = polygon_area_sqm([[ring]])
            k = int(rng.integers(0, len(ring) - 1))
            rotated = ring[k:-1] + ring[:k] + [ring[k]]
            reversed_ring = ring[::-1]
            np.testing.assert_allclose(polygon_area_sqm([[rotated]]), base, rtol=1e-12)
            np.testing.assert_allclose(polygon_area_sqm([[reversed_ring]]), base, rtol=1e-12)

    def test_multipolygon_sums_parts(self):
        parts = [[square_ring(0, 0, 2)], [square_ring(10, 10, 3)]]
        assert polygon_area_sqm(parts) == 4.0 + 9.0


class TestNodeCount:
    def test_square_is_four(self):
        assert node_count([[square_ring(0, 0, 1)]]) == 4

    def test_multipolygon_two_squares(self):
        parts = [[square_ring(0, 0, 1)], [square_ring(5, 5, 1)]]
        assert node_count(parts) == 8

    def test_holes_excluded_by_default(self):
        assert node_count(holed_square()) == 4
        assert node_count(holed_square(), include_holes=True) == 8

    def test_rotation_invariance(self):
        rng = np.random.default_rng(9)
        ring = star_polygon(rng, 7)
        base = node_count([[ring]])
        rotated = ring[2:-1] + ring[:2] + [ring[2]]
        assert node_count([[rotated]]) == base == 7

    def test_degenerate(self):
        with pytest.raises(DegenerateRing):
            node_count([[[(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)]]])


class TestPointInPolygon:
    def test_interior_exterior(self):
        assert point_in_polygon((0.5, 0.5), [UNIT_SQUARE])
        assert not point_in_polygon((2.0, 2.0), [UNIT_SQUARE])

    def test_hole_center_outside(self):
        assert not point_in_polygon((5.0, 5.0), holed_square())
        assert point_in_polygon((1.0, 1.0), holed_square())

    def test_shared_edge_counted_once(self):
        # two squares sharing the edge x=1: a point on it lies in exactly one
        left = [[square_ring(0, 0, 1)]]
        right = [[square_ring(1, 0, 1)]]
        pt = (1.0, 0.5)
        assert point_in_polygon(pt, left) + point_in_polygon(pt, right) == 1

    def test_vertex_ray_determinism(self):
        # ray through a vertex must not double count
        diamond = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
        assert point_in_polygon((0.0, 0.0), [[diamond]])
        assert not point_in_polygon((-2.0, 0.0), [[diamond]])
        assert not point_in_polygon((2.0, 0.0), [[diamond]])


def grid_from(values, xll=0.0, yll=0.0, cellsize=1.0, nodata=-9999.0):
    values = np.asarray(values, dtype=float)
    return DemGrid(ncols=values.shape[1], nrows=values.shape[0], xll=xll, yll=yll,
                   cellsize=cellsize, nodata=nodata, values=values)


class TestZonalStats:
    def test_two_by_two_hand_case(self):
        grid = grid_from([[1, 2], [3, 4]])
        big = [[square_ring(-1, -1, 4)]]
        stats = zonal_stats(grid, big)
        assert stats.mean == 2.5
        assert stats.max == 4.0
        assert stats.count == 4
        # population std by hand: sqrt(5/4)
        np.testing.assert_allclose(stats.std, np.sqrt(5.0 / 4.0), rtol=1e-12)

    def test_single_cell(self):
        grid = grid_from([[7.0]])
        stats = zonal_stats(grid, [[square_ring(0, 0, 1)]])
        assert (stats.mean, stats.max, stats.std, stats.count) == (7.0, 7.0, 0.0, 1)

    def test_all_nodata_region(self):
        grid = grid_from([[-9999, -9999], [-9999, -9999]])
        with pytest.raises(NoCellsCovered):
            zonal_stats(grid, [[square_ring(0, 0, 2)]])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(21)
        checked = 0
        for _ in range(120):
            nrows = int(rng.integers(2, 21))
            ncols = int(rng.integers(2, 21))
            values = rng.normal(20, 5, size=(nrows, ncols))
            values[rng.random(size=values.shape) < 0.15] = -9999.0
            grid = grid_from(values, xll=float(rng.integers(-5, 6)),
                             yll=float(rng.integers(-5, 6)))
            cx = grid.xll + rng.uniform(0, ncols)
            cy = grid.yll + rng.uniform(0, nrows)
            ring = star_polygon(rng, int(rng.integers(3, 13)), cx, cy,
                                rmin=0.5, rmax=rng.uniform(1, 12))
            parts = [[ring]]
            if rng.random() < 0.3:
                hole = star_polygon(rng, 4, cx, cy, rmin=0.1, rmax=0.4)
                parts = [[ring, hole]]
            expected = brute_force_zonal(grid, parts)
            if expected is None:
                with pytest.raises(NoCellsCovered):
                    zonal_stats(grid, parts)
                continue
            got = zonal_stats(grid, parts)
            assert got == expected
            checked += 1
        assert checked >= 40

    def test_translation_invariance(self):
        grid = grid_from(np.arange(12.0).reshape(3, 4))
        ring = [(0.2, 0.1), (3.7, 0.4), (2.9, 2.8), (0.4, 2.5), (0.2, 0.1)]
        base = zonal_stats(grid, [[ring]])
        dx, dy = 137.0, -42.0
        moved_grid = grid_from(np.arange(12.0).reshape(3, 4), xll=dx, yll=dy)
        moved_ring = [(x + dx, y + dy) for x, y in ring]
        assert zonal_stats(moved_grid, [[moved_ring]]) == base

    def test_constant_shift_moves_mean_and_max_only(self):
        rng = np.random.default_rng(2)
        values = rng.normal(10, 3, size=(6, 6))
        ring = star_polygon(rng, 8, 3.0, 3.0, rmin=1.0, rmax=3.0)
        base = zonal_stats(grid_from(values), [[ring]])
        shifted = zonal_stats(grid_from(values + 5.0), [[ring]])
        np.testing.assert_allclose(shifted.mean, base.mean + 5.0, rtol=1e-12)
        np.testing.assert_allclose(shifted.max, base.max + 5.0, rtol=1e-12)
        np.testing.assert_allclose(shifted.std, base.std, atol=1e-12)
        assert shifted.count == base.count
