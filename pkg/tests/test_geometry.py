import math

import numpy as np
import pytest

from flatcover.geometry import (
    AffineMap2,
    Parallelogram,
    axis_rectangle,
    comparable,
    dilate,
    intersection_area,
    make_tile_grid,
    point_membership,
    polygon_area,
    rotated_rectangle,
    tile_rotated_rectangles,
)


def test_axis_rectangle_basics():
    box = axis_rectangle(0.1, 0.2, 0.6, 0.4)
    assert box.center == pytest.approx((0.35, 0.3))
    assert box.side_lengths() == pytest.approx((0.5, 0.2))
    assert box.area() == pytest.approx(0.1)
    assert box.diameter() == pytest.approx(math.hypot(0.5, 0.2))
    v = box.vertices()
    assert v[:, 0].min() == pytest.approx(0.1)
    assert v[:, 1].max() == pytest.approx(0.4)


def test_rotated_rectangle_geometry():
    theta = 0.3
    box = rotated_rectangle((0.5, 0.5), 0.4, 0.1, theta)
    assert box.side_lengths() == pytest.approx((0.4, 0.1))
    assert box.area() == pytest.approx(0.04)
    # e1 points along theta
    assert math.atan2(box.e1[1], box.e1[0]) == pytest.approx(theta)
    # vertices land where rotating an axis box would put them
    c = np.array([0.5, 0.5])
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    corner = c + rot @ np.array([0.2, 0.05])
    assert np.min(np.linalg.norm(box.vertices() - corner, axis=1)) < 1e-12


def test_affine_coords_and_contains():
    box = rotated_rectangle((0.0, 0.0), 2.0, 1.0, 0.7)
    rng = np.random.default_rng(5)
    t = rng.uniform(-1, 1, size=(50, 2))
    pts = np.asarray(box.center) + t[:, :1] * box.e1 + t[:, 1:] * box.e2
    np.testing.assert_allclose(box.affine_coords(pts), t, atol=1e-12)
    assert box.contains(pts).all()
    far = np.asarray(box.center) + 1.01 * (np.asarray(box.e1) + np.asarray(box.e2))
    assert not box.contains(far[None, :])[0]


def test_point_membership_half_open():
    box = axis_rectangle(0.0, 0.0, 1.0, 1.0)
    # lower/left edges belong to the box, upper/right do not
    assert point_membership(box, (0.0, 0.0))
    assert point_membership(box, (0.5, 0.0))
    assert not point_membership(box, (1.0, 1.0))
    assert not point_membership(box, (0.5, 1.0))
    assert not point_membership(box, (1.001, 0.5))


def test_dilate_scales_area():
    box = rotated_rectangle((0.3, 0.4), 0.5, 0.2, 1.1)
    big = dilate(box, 3.0)
    assert big.center == box.center
    assert big.area() == pytest.approx(9.0 * box.area())
    assert big.contains(np.array([box.vertices()[2]]))[0]


def test_comparable_detects_shape_mismatch():
    a = axis_rectangle(0.0, 0.0, 0.2, 0.2)
    b = axis_rectangle(0.05, 0.05, 0.25, 0.25)
    thin = axis_rectangle(0.0, 0.0, 1.0, 0.01)
    assert comparable(a, b, 4.0)
    assert not comparable(a, thin, 1.5)


def test_affine_map_round_trip():
    m = AffineMap2(((0.8, -0.4), (0.3, 1.1)), (0.2, -0.5))
    pts = np.random.default_rng(9).normal(size=(30, 2))
    back = m.inverse().apply(m.apply(pts))
    np.testing.assert_allclose(back, pts, atol=1e-12)


def test_affine_map_compose_matches_sequential():
    outer = AffineMap2.rotation(0.4)
    inner = AffineMap2(((2.0, 0.0), (0.0, 0.5)), (0.1, 0.1))
    pts = np.random.default_rng(2).normal(size=(10, 2))
    both = outer.compose(inner).apply(pts)
    seq = outer.apply(inner.apply(pts))
    np.testing.assert_allclose(both, seq, atol=1e-12)


def test_affine_map_on_boxes_preserves_area_ratio():
    m = AffineMap2(((1.5, 0.2), (-0.1, 0.8)), (0.0, 0.3))
    det = abs(1.5 * 0.8 - 0.2 * (-0.1))
    box = rotated_rectangle((0.2, 0.7), 0.3, 0.1, 0.25)
    assert m.apply_box(box).area() == pytest.approx(det * box.area())


def test_rotation_map_is_orthogonal():
    r = AffineMap2.rotation(1.2)
    mat = r.matrix
    np.testing.assert_allclose(mat.T @ mat, np.eye(2), atol=1e-14)


def test_tile_grid_partitions_unit_square():
    grid = make_tile_grid(0.25, 0.125, 0.0)
    tiles = list(grid.tiles())
    assert len(tiles) == 4 * 8
    total = sum(t.area() for t in tiles)
    assert total == pytest.approx(1.0)
    # every interior point sits in exactly one half-open tile
    rng = np.random.default_rng(13)
    pts = rng.uniform(0.001, 0.999, size=(300, 2))
    counts = grid.count_points(pts)
    np.testing.assert_array_equal(counts, 1)
    member = np.zeros(len(pts), dtype=int)
    for t in tiles:
        x = t.affine_coords(pts)
        member += np.all((x >= -1.0) & (x < 1.0), axis=1)
    np.testing.assert_array_equal(member, 1)


def test_tile_grid_count_points_matches_cells():
    grid = make_tile_grid(0.2, 0.3, 0.0, (0.0, 0.0, 1.0, 1.0))
    rng = np.random.default_rng(31)
    pts = rng.uniform(0, 1, size=(500, 2))
    counts = grid.count_points(pts)
    cells = grid.cell_of(pts)
    inside = (
        (cells[:, 0] >= grid.i0) & (cells[:, 0] < grid.i1)
        & (cells[:, 1] >= grid.j0) & (cells[:, 1] < grid.j1)
    )
    np.testing.assert_array_equal(counts, inside.astype(counts.dtype))


def test_tile_grid_cell_of_agrees_with_tile_membership():
    grid = make_tile_grid(0.21, 0.17, 0.35, (0.0, 0.0, 1.0, 1.0),
                          clip_to_domain=False)
    rng = np.random.default_rng(8)
    pts = rng.uniform(0.1, 0.9, size=(60, 2))
    cells = grid.cell_of(pts)
    for (i, j), p in zip(cells, pts):
        tile = grid.tile(int(i), int(j))
        x = tile.affine_coords(p[None, :])[0]
        assert np.all(np.abs(x) <= 1.0 + 1e-9)


def test_rotated_tiling_covers_domain():
    tiles = tile_rotated_rectangles(0.3, 0.11, 0.5)
    rng = np.random.default_rng(17)
    pts = rng.uniform(0, 1, size=(400, 2))
    hit = np.zeros(len(pts), dtype=bool)
    for t in tiles:
        hit |= t.contains(pts)
    assert hit.all()


def test_tile_grid_clip_drops_outside_cells():
    clipped = make_tile_grid(0.3, 0.11, 0.5)
    full = make_tile_grid(0.3, 0.11, 0.5, clip_to_domain=False)
    assert len(list(clipped.tiles())) < len(list(full.tiles()))
    # clipping never drops a tile that meets the domain
    rng = np.random.default_rng(23)
    pts = rng.uniform(0, 1, size=(200, 2))
    np.testing.assert_array_equal(
        clipped.count_points(pts), full.count_points(pts)
    )


def test_polygon_area_triangle():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    assert polygon_area(tri) == pytest.approx(1.0)


def test_intersection_area_cases():
    a = axis_rectangle(0.0, 0.0, 1.0, 1.0)
    b = axis_rectangle(0.5, 0.5, 1.5, 1.5)
    assert intersection_area(a, b) == pytest.approx(0.25)
    c = axis_rectangle(2.0, 2.0, 3.0, 3.0)
    assert intersection_area(a, c) == pytest.approx(0.0)
    # rotated square inscribed in the unit square
    d = rotated_rectangle((0.5, 0.5), math.sqrt(0.5), math.sqrt(0.5), math.pi / 4)
    assert intersection_area(a, d) == pytest.approx(0.5)
    # intersection is symmetric
    assert intersection_area(d, a) == pytest.approx(0.5)


def test_parallelogram_json_round_trip():
    box = rotated_rectangle((0.3, 0.4), 0.5, 0.2, 1.1)
    box2 = Parallelogram.from_json_dict(box.to_json_dict())
    assert box2.center == box.center
    assert box2.e1 == box.e1
    with pytest.raises(ValueError):
        Parallelogram.from_json_dict({"center": [0, 0]})


def test_make_tile_grid_rejects_bad_sides():
    with pytest.raises(ValueError):
        make_tile_grid(0.0, 0.1, 0.0)
