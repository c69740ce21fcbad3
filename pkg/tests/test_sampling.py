import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheye_shapes.errors import CentroidOutside, DataError, DegenerateInput
from fisheye_shapes.geometry import Contour, GridSpec2D, is_simple_polygon, points_in_polygon, polygon_mask_iou, rasterize_polygon
from fisheye_shapes.sampling import (
    AdaptiveSamplingConfig,
    ray_polygon_hits,
    sample_adaptive,
    sample_uniform_angular,
    sample_uniform_perimeter,
    sector_centers,
    sector_vertex_counts,
    to_polar,
)
from fisheye_shapes.shapes import VertexPolygon

from conftest import circle_points
from test_shapes import seg_distance

SQUARE = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


def stadium(r=20.0, length=80.0, n_arc=200, n_side=200):
    t = np.linspace(-math.pi / 2, math.pi / 2, n_arc, endpoint=False)
    right = np.column_stack([length / 2 + r * np.cos(t), r * np.sin(t)])
    left = np.column_stack([-length / 2 - r * np.cos(t), -r * np.sin(t)])
    s = np.linspace(0, 1, n_side, endpoint=False)[:, None]
    top = np.array([length / 2, r]) + s * np.array([-length, 0])
    bottom = np.array([-length / 2, -r]) + s * np.array([length, 0])
    return np.vstack([right, top, left, bottom])


def blob(seed, n=180):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = 40 + sum(rng.normal(0, 6 / k) * np.cos(k * t + rng.uniform(0, 6.3)) for k in range(1, 6))
    return np.column_stack([60 + r * np.cos(t), 60 + r * np.sin(t)])


def mask_of(v):
    return rasterize_polygon(v, GridSpec2D(120, 120))


# --- angular ------------------------------------------------------------------


def test_angular_circle_radii():
    p = sample_uniform_angular(circle_points(10.0, 720, (3, 4)), 16)
    np.testing.assert_allclose(p.radii, 10.0, rtol=1e-4)
    np.testing.assert_array_equal(p.alphas, 1)


def test_angular_square_n8():
    p = sample_uniform_angular(SQUARE, 8)
    np.testing.assert_allclose(p.radii[::2], 0.5, atol=1e-12)
    np.testing.assert_allclose(p.radii[1::2], math.sqrt(2) / 2, atol=1e-12)


def test_angular_crescent_uses_farthest_hit():
    # Disk of radius 30 minus the disk of radius 25 about (-20, 0).
    a = math.atan2(24.8, -16.875)
    t = np.linspace(-a, a, 200)
    outer = np.column_stack([30 * np.cos(t), 30 * np.sin(t)])
    b = math.atan2(math.sqrt(625 - 3.125 ** 2), 3.125)
    t2 = np.linspace(b, -b, 200)[1:-1]
    inner = np.column_stack([-20 + 25 * np.cos(t2), 25 * np.sin(t2)])
    v = np.vstack([outer, inner])
    c = Contour(v)
    p = sample_uniform_angular(c, 24)
    # Oracle: dense ray casting by brute-force stepping.
    for r, th in zip(p.radii, p.thetas):
        d = np.array([math.cos(th), math.sin(th)])
        steps = np.linspace(0, 80, 80001)
        pts = p.center + steps[:, None] * d
        inside = points_in_polygon(pts, c.vertices)
        assert r == pytest.approx(steps[np.flatnonzero(inside).max()], abs=2e-3)
    assert is_simple_polygon(p.vertex_array())


def test_angular_centroid_outside_raises():
    t = np.linspace(0.3, 2 * np.pi - 0.3, 100)
    outer = np.column_stack([30 * np.cos(t), 30 * np.sin(t)])
    inner = np.column_stack([27 * np.cos(t[::-1]), 27 * np.sin(t[::-1])])
    with pytest.raises(CentroidOutside):
        sample_uniform_angular(np.vstack([outer, inner]), 12)


@given(st.integers(0, 5000), st.integers(3, 40))
def test_angular_vertices_on_boundary_and_simple(seed, n):
    v = blob(seed)
    p = sample_uniform_angular(v, n)
    assert seg_distance(p.vertex_array(), v).max() < 1e-9
    assert is_simple_polygon(p.vertex_array())


# --- perimeter ----------------------------------------------------------------


def test_perimeter_square_corners_and_triangle_identity():
    p = sample_uniform_perimeter(SQUARE * 2, 4)
    np.testing.assert_allclose(p.absolute, SQUARE * 2, atol=1e-12)
    tri = np.array([[0.0, 0.0], [3.0, 0.0], [1.5, 3 * math.sqrt(3) / 2]])
    np.testing.assert_allclose(sample_uniform_perimeter(tri, 3).absolute, tri, atol=1e-12)


def test_perimeter_n120_beats_n24_on_blobs():
    ious = {24: [], 120: []}
    for s in range(10):
        v = blob(s)
        m = mask_of(v)
        for n in ious:
            ious[n].append(polygon_mask_iou(sample_uniform_perimeter(v, n).absolute, m))
    assert np.mean(ious[120]) >= np.mean(ious[24])


@given(st.integers(0, 5000), st.integers(3, 60))
def test_perimeter_vertices_on_boundary(seed, n):
    v = blob(seed)
    p = sample_uniform_perimeter(v, n)
    assert len(p.vertices) == n
    assert seg_distance(p.absolute, v).max() < 1e-9
    np.testing.assert_allclose(p.absolute[0], v[0])


def test_perimeter_rejects_small_n():
    with pytest.raises(DegenerateInput):
        sample_uniform_perimeter(SQUARE, 2)


# --- adaptive -----------------------------------------------------------------


def test_adaptive_stadium_prefers_arcs():
    st_ = stadium()
    p = sample_adaptive(st_, AdaptiveSamplingConfig(target_vertices=24))
    assert len(p.vertices) == 24
    x = p.absolute[:, 0]
    on_arcs = np.sum(np.abs(x) > 40 + 1e-9)
    on_sides = 24 - on_arcs
    # Vertices exactly at the tangent points are counted as side vertices.
    assert on_arcs > on_sides
    assert seg_distance(p.absolute, st_).max() < 1e-9


def test_adaptive_circle_nearly_uniform():
    p = sample_adaptive(circle_points(50.0, 600), AdaptiveSamplingConfig(target_vertices=24))
    v = p.absolute
    d = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    assert d.max() / d.min() < 1.5


def test_adaptive_beats_uniform_on_blob_corpus(corpus40):
    ada, uni = [], []
    for s in corpus40:
        ada.append(polygon_mask_iou(sample_adaptive(s.contour).absolute, s.mask))
        uni.append(polygon_mask_iou(sample_uniform_perimeter(s.contour, 24).absolute, s.mask))
    assert np.mean(ada) >= np.mean(uni) + 0.005


@given(st.integers(0, 5000), st.integers(4, 40))
def test_adaptive_exact_count_and_on_boundary(seed, n):
    v = blob(seed)
    p = sample_adaptive(v, AdaptiveSamplingConfig(target_vertices=n))
    assert len(p.vertices) == n
    assert seg_distance(p.absolute, v).max() < 1e-9
    assert len(np.unique(p.absolute, axis=0)) == n


def test_adaptive_config_validation():
    with pytest.raises(DataError):
        AdaptiveSamplingConfig(target_vertices=3)
    with pytest.raises(DegenerateInput):
        sample_adaptive(SQUARE, AdaptiveSamplingConfig(target_vertices=24))


# --- sector counts ------------------------------------------------------------


def test_sector_counts_examples():
    p = sample_uniform_angular(circle_points(10.0, 100), 12)
    rel = p.vertex_array() - p.center
    vp = VertexPolygon(p.center, rel)
    np.testing.assert_array_equal(sector_vertex_counts(vp, 12), np.ones(12))
    half = VertexPolygon((0, 0), [[1, 0.1], [1, 0.5], [0.5, 1], [0.1, 1]])
    np.testing.assert_array_equal(sector_vertex_counts(half, 2), [4, 0])


def test_sector_counts_sum_and_recount_oracle():
    p = sample_adaptive(stadium(), AdaptiveSamplingConfig(target_vertices=24))
    counts = sector_vertex_counts(p, 8)
    assert counts.sum() == 24
    w = 2 * math.pi / 8
    ang = np.degrees(np.arctan2(p.vertices[:, 1], p.vertices[:, 0]))
    manual = np.zeros(8, int)
    for a in ang:
        manual[int(((math.radians(a) + w / 2) % (2 * math.pi)) // w)] += 1
    np.testing.assert_array_equal(counts, manual)
    # Sectors facing the arcs (0 and 4) hold more than those facing the sides.
    assert counts[0] + counts[4] > counts[2] + counts[6]


def test_to_polar_keeps_first_vertex_per_sector():
    p = sample_uniform_perimeter(blob(3), 36)
    pol = to_polar(p, 12)
    assert pol.alphas.sum() == 36
    for i in np.flatnonzero(pol.alphas):
        v = pol.center + pol.radii[i] * np.array([math.cos(pol.thetas[i]), math.sin(pol.thetas[i])])
        assert np.min(np.linalg.norm(p.absolute - v, axis=1)) < 1e-9


def test_ray_hits_nan_on_miss():
    r = ray_polygon_hits((10, 0), np.array([0.0, math.pi]), SQUARE)
    assert np.isnan(r[0])
    assert r[1] == pytest.approx(10.5)
    np.testing.assert_allclose(sector_centers(4), [0, math.pi / 2, math.pi, 3 * math.pi / 2])
