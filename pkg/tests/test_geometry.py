import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheye_shapes.errors import BothEmpty, DegenerateInput, DimensionMismatch, InvalidContour, NonConvexInput, OutOfBounds
from fisheye_shapes.geometry import (
    BinaryMask,
    Contour,
    GridSpec2D,
    axis_aligned_rect,
    convex_clip_iou,
    convex_hull,
    fit_circle_kasa,
    is_convex,
    local_curvature,
    mask_iou,
    min_area_rect,
    min_enclosing_ellipse,
    points_in_polygon,
    polygon_area,
    polygon_mask_iou,
    polygon_perimeter,
    raster_iou,
    rasterize_polygon,
    resample_arclength,
    signed_area,
)

from conftest import circle_points, random_convex

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def rot(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def brute_raster(vertices, grid: GridSpec2D):
    """Independent oracle: even-odd test at every pixel center."""
    xs, ys = np.meshgrid(*grid.pixel_centers())
    inside = points_in_polygon(np.column_stack([xs.ravel(), ys.ravel()]), vertices)
    return inside.reshape(grid.height, grid.width)


# --- Contour -----------------------------------------------------------------


def test_contour_normalizes_to_ccw_keeping_first_vertex():
    cw = SQUARE[::-1].copy()
    c = Contour(cw)
    assert signed_area(c.vertices) > 0
    np.testing.assert_array_equal(c.vertices[0], cw[0])


def test_contour_rejects_two_vertices_and_bowtie():
    with pytest.raises(InvalidContour):
        Contour([[0, 0], [1, 1]])
    with pytest.raises(InvalidContour):
        Contour([[0, 0], [1, 1], [1, 0], [0, 1]])


# --- hull -------------------------------------------------------------------


def test_hull_drops_interior_point():
    pts = np.vstack([SQUARE, [[0.5, 0.5]]])
    hull = convex_hull(pts).vertices
    assert len(hull) == 4
    assert {tuple(p) for p in hull} == {tuple(p) for p in SQUARE}


def test_hull_of_convex_ccw_points_is_same_set():
    pts = circle_points(3.0, 9)
    hull = convex_hull(pts).vertices
    assert {tuple(np.round(p, 12)) for p in hull} == {tuple(np.round(p, 12)) for p in pts}


def test_hull_collinear_raises():
    with pytest.raises(DegenerateInput):
        convex_hull([[0, 0], [1, 1], [2, 2], [3, 3]])


def test_hull_contains_random_disk_points():
    rng = np.random.default_rng(1)
    r = np.sqrt(rng.uniform(size=100))
    t = rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    hull = convex_hull(pts).vertices
    assert is_convex(hull)
    # Every point is on the inner side of every hull edge.
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        assert np.all(cross >= -1e-12)


# --- min area rect ----------------------------------------------------------


def test_rotated_unit_square_recovered():
    pts = (SQUARE - 0.5) @ rot(30).T + [5, 5]
    r = min_area_rect(pts)
    assert r.area == pytest.approx(1.0, abs=1e-9)
    assert r.angle % 90 == pytest.approx(30.0, abs=1e-7)
    assert -90 <= r.angle < 90


def test_triangle_rect_is_twice_area():
    tri = np.array([[0.0, 0.0], [7.0, 1.0], [2.0, 5.0]])
    assert min_area_rect(tri).area == pytest.approx(2 * polygon_area(tri), rel=1e-9)


def test_axis_square_angle_zero_and_diamond_tie_rule():
    assert min_area_rect(SQUARE * 3).angle == 0.0
    diamond = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    assert min_area_rect(diamond).angle == pytest.approx(45.0)


def test_min_area_rect_beats_brute_force_sweep():
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = random_convex(rng, 10)
        r = min_area_rect(v)
        best = math.inf
        for deg in np.arange(0, 90, 0.1):
            p = v @ rot(-deg).T
            ext = p.max(axis=0) - p.min(axis=0)
            best = min(best, ext[0] * ext[1])
        assert r.area <= best + 1e-9
        assert r.area <= axis_aligned_rect(v).area + 1e-9
        # Encloses every vertex.
        local = (v - r.center) @ rot(r.angle)
        assert np.all(np.abs(local[:, 0]) <= r.width / 2 + 1e-7)
        assert np.all(np.abs(local[:, 1]) <= r.height / 2 + 1e-7)


# --- ellipse ----------------------------------------------------------------


def test_mvee_circle_and_square():
    e = min_enclosing_ellipse(circle_points(4.0, 40, (3, -2)))
    assert e.a == pytest.approx(4.0, rel=1e-4) and e.b == pytest.approx(4.0, rel=1e-4)
    np.testing.assert_allclose(e.center, [3, -2], atol=1e-6)
    s = min_enclosing_ellipse(SQUARE * 2 - 1)
    assert s.a == pytest.approx(math.sqrt(2), rel=1e-4) and s.b == pytest.approx(math.sqrt(2), rel=1e-4)


def test_mvee_encloses_and_beats_rect_circumscribed_ellipse():
    rng = np.random.default_rng(3)
    for _ in range(10):
        pts = rng.normal(size=(30, 2)) * [5, 2]
        e = min_enclosing_ellipse(pts)
        loc = (pts - e.center) @ rot(e.angle)
        assert np.all((loc[:, 0] / e.a) ** 2 + (loc[:, 1] / e.b) ** 2 <= (1 + 1e-4) ** 2)
        r = min_area_rect(pts)
        # Ellipse through the rectangle corners with the rectangle's aspect.
        assert e.area <= math.pi * r.width * r.height / 2 + 1e-9


def test_mvee_collinear_raises():
    with pytest.raises(DegenerateInput):
        min_enclosing_ellipse([[0, 0], [1, 1], [2, 2]])


# --- Kasa circle ------------------------------------------------------------


def test_kasa_exact_circle():
    f = fit_circle_kasa(circle_points(7.0, 20, (1, 2)))
    assert f.radius == pytest.approx(7.0, abs=1e-9)
    assert f.max_residual < 1e-9 and not f.is_line


def test_kasa_collinear_falls_back_to_line():
    f = fit_circle_kasa(np.column_stack([np.arange(10.0), 2 * np.arange(10.0) + 1]))
    assert f.is_line and f.max_residual < 1e-9


def test_kasa_noisy_circle_monte_carlo():
    rng = np.random.default_rng(4)
    errs = []
    for _ in range(50):
        pts = circle_points(50.0, 100, (10, 10)) + rng.uniform(-0.1, 0.1, (100, 2))
        errs.append(abs(fit_circle_kasa(pts).radius - 50.0))
    assert max(errs) < 0.2


# --- rasterization ----------------------------------------------------------


def test_square_rasterizes_to_100_pixels():
    sq = SQUARE * 10 + 2
    assert rasterize_polygon(sq, GridSpec2D(20, 20)).count == 100


def test_zero_area_polygon_rasterizes_empty():
    flat = np.array([[1.0, 1.0], [5.0, 1.0], [9.0, 1.0]])
    assert rasterize_polygon(flat, GridSpec2D(12, 12)).count == 0


def test_triangle_near_half_area():
    tri = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    m = rasterize_polygon(tri, GridSpec2D(10, 10))
    assert abs(m.count - 50) <= polygon_perimeter(tri)
    np.testing.assert_array_equal(m.bits, brute_raster(tri, GridSpec2D(10, 10)))


def test_out_of_bounds_raises():
    with pytest.raises(OutOfBounds):
        rasterize_polygon(SQUARE * 30, GridSpec2D(10, 10))


@given(st.integers(0, 10_000), st.floats(0.5, 3.0))
def test_scanline_matches_point_in_polygon_oracle(seed, res):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 2 * np.pi, 9))
    r = rng.uniform(3, 10, 9)
    v = np.column_stack([12 + r * np.cos(t), 12 + r * np.sin(t)])
    grid = GridSpec2D(int(24 * res), int(24 * res), res)
    np.testing.assert_array_equal(rasterize_polygon(v, grid).bits, brute_raster(v, grid))


def test_pgm_round_trip():
    m = rasterize_polygon(circle_points(5, 30, (8, 6)), GridSpec2D(17, 13))
    back = BinaryMask.from_pgm(m.to_pgm())
    np.testing.assert_array_equal(back.bits, m.bits)


# --- IoU --------------------------------------------------------------------


def test_mask_iou_examples():
    a = np.zeros((4, 4), bool)
    a[:2, :2] = True
    b = np.zeros((4, 4), bool)
    b[2:, 2:] = True
    c = np.zeros((4, 4), bool)
    c[:2, 1:3] = True
    A, B, C = BinaryMask(a), BinaryMask(b), BinaryMask(c)
    assert mask_iou(A, A) == 1.0
    assert mask_iou(A, B) == 0.0
    assert mask_iou(A, C) == pytest.approx(1 / 3)
    assert mask_iou(A, C) == mask_iou(C, A)
    with pytest.raises(BothEmpty):
        mask_iou(BinaryMask(np.zeros((2, 2), bool)), BinaryMask(np.zeros((2, 2), bool)))
    with pytest.raises(DimensionMismatch):
        mask_iou(A, BinaryMask(np.ones((3, 3), bool)))


def test_convex_clip_examples():
    assert convex_clip_iou(SQUARE, SQUARE) == pytest.approx(1.0)
    assert convex_clip_iou(SQUARE, SQUARE + [0.5, 0]) == pytest.approx(1 / 3)
    with pytest.raises(NonConvexInput):
        convex_clip_iou(SQUARE, [[0, 0], [2, 0], [1, 0.2], [1, 2]])


def test_convex_clip_agrees_with_raster_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        a = random_convex(rng, 8)
        b = random_convex(rng, 8, center=rng.normal(size=2) * 5)
        assert abs(convex_clip_iou(a, b) - raster_iou(a, b, 512)) < 0.02


def test_polygon_mask_iou_penalizes_parts_outside_image():
    grid = GridSpec2D(10, 10)
    mask = rasterize_polygon(SQUARE * 4, grid)
    assert polygon_mask_iou(SQUARE * 4, mask) == 1.0
    # Same square plus an equal part hanging off the left edge of the image.
    wide = np.array([[-4.0, 0.0], [4.0, 0.0], [4.0, 4.0], [-4.0, 4.0]])
    assert polygon_mask_iou(wide, mask) == pytest.approx(0.5)


# --- resampling and curvature ----------------------------------------------


def test_resample_square_corners_and_identity():
    sq = SQUARE * 2
    np.testing.assert_allclose(resample_arclength(sq, 4).vertices, sq, atol=1e-12)
    hexa = circle_points(1.0, 6)
    np.testing.assert_allclose(resample_arclength(hexa, 6).vertices, hexa, atol=1e-12)


def test_resample_circle_spacing_and_perimeter():
    c = circle_points(20.0, 2000)
    v = resample_arclength(c, 24).vertices
    d = np.linalg.norm(np.diff(np.vstack([v, v[:1]]), axis=0), axis=1)
    assert d.max() - d.min() < 1e-5 * d.mean()  # chords of a 2000-gon, not exact arcs
    assert polygon_perimeter(v) == pytest.approx(polygon_perimeter(c), rel=0.01)


def test_local_curvature():
    line = np.column_stack([np.arange(20.0), np.zeros(20)])
    tri_like = np.vstack([line, [[10.0, 5.0]]])
    assert local_curvature(tri_like, 8) == 0.0
    circ = circle_points(25.0, 400)
    assert local_curvature(circ, 17) == pytest.approx(1 / 25, rel=0.05)
    sq = resample_arclength(SQUARE * 10, 40).vertices
    assert local_curvature(sq, 0) > local_curvature(sq, 5)
