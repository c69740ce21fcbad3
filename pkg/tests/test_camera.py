import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheye_shapes.camera import (
    DivisionModel,
    EquidistantModel,
    Line3D,
    PolynomialFisheyeModel,
    division_forward_angle,
    fit_division_model,
    invert_division_radius,
    line_circle_residual,
    project_line_curve,
    project_point,
    project_points,
)
from fisheye_shapes.errors import DataError, DegeneratePoint, FieldAngleExceeded, Unrepresentable

PP = (640.0, 483.0)


def point_at(theta, azimuth=0.0, depth=1.0):
    s = math.tan(theta) if theta < math.pi / 2 else None
    if s is None:
        # Behind the image plane: build from a unit vector.
        return np.array([math.sin(theta) * math.cos(azimuth), math.sin(theta) * math.sin(azimuth), math.cos(theta)])
    return np.array([s * math.cos(azimuth), s * math.sin(azimuth), 1.0]) * depth


def test_on_axis_maps_to_principal_point(rig):
    for cam in rig.cameras:
        np.testing.assert_array_equal(project_point(cam.model, [0, 0, 5]), cam.model.principal_point)


def test_equidistant_polynomial_example():
    poly = PolynomialFisheyeModel((100.0, 0, 0, 0), PP)
    np.testing.assert_allclose(project_point(poly, point_at(0.5)), np.array(PP) + [50.0, 0.0], atol=1e-9)


def test_woodscape_like_radius_is_horner_value(rig):
    m = rig["front"].model
    a1, a2, a3, a4 = m.coeffs
    t = 1.2
    expected = a1 * t + a2 * t ** 2 + a3 * t ** 3 + a4 * t ** 4
    p = project_point(m, point_at(t, 0.3))
    assert np.linalg.norm(p - m.principal_point) == pytest.approx(expected, rel=1e-12)


def test_projection_errors(rig):
    m = rig["front"].model
    with pytest.raises(DegeneratePoint):
        project_point(m, [0, 0, 0])
    with pytest.raises(FieldAngleExceeded):
        project_point(m, point_at(math.radians(100)))


def test_non_monotone_polynomial_rejected():
    with pytest.raises(DataError):
        PolynomialFisheyeModel((100.0, 0, -100.0, 0), PP)


def test_calibration_is_monotone_with_190_fov(rig):
    for cam in rig.cameras:
        m = cam.model
        assert m.max_field_angle == pytest.approx(math.radians(95))
        th = np.linspace(0, m.max_field_angle, 5000)
        assert np.all(np.diff(m.radius(th)) > 0)
        assert m.radius(0.0) == 0.0
    assert rig.ids == ["front", "rear", "left", "right"]


@given(st.floats(0.0, 1.6), st.floats(-math.pi, math.pi), st.floats(0.1, 50))
def test_azimuth_preserved(theta, az, depth):
    m = PolynomialFisheyeModel((330.0, -5.0, 8.0, -3.0), PP)
    p = point_at(theta, az, depth)
    q = project_point(m, p) - m.principal_point
    if np.hypot(p[0], p[1]) > 1e-9 and np.linalg.norm(q) > 1e-9:
        d = math.atan2(q[1], q[0]) - math.atan2(p[1], p[0])
        assert abs(math.remainder(d, 2 * math.pi)) < 1e-9


def test_polynomial_and_equidistant_agree():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(500, 3))
    pts[:, 2] = np.abs(pts[:, 2]) + 0.05
    a = project_points(PolynomialFisheyeModel((250.0, 0, 0, 0), PP), pts)
    b = project_points(EquidistantModel(250.0, PP), pts)
    np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)


# --- line curves -------------------------------------------------------------


def test_line_in_axial_plane_projects_to_radial_ray():
    m = EquidistantModel(300.0, PP)
    # Plane y = 0.5 x contains the optical axis.
    line = Line3D([1.0, 0.5, 0.3], [0.0, 0.0, 2.0])
    pts = project_line_curve(m, line, (-1, 1), 20) - m.principal_point
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    assert np.all(np.abs(np.remainder(ang - math.atan2(0.5, 1.0) + math.pi / 2, math.pi) - math.pi / 2) < 1e-9)


def test_line_curve_matches_eqs_closed_form():
    a = 100.0
    m = EquidistantModel(a, PP)
    line = Line3D([1.0, 0.0, 0.0], [0.0, 0.5, 2.0])
    ts = np.linspace(-3, 3, 25)
    got = project_line_curve(m, line, (-3, 3), 25)
    # Pinhole p(t) = (x/z, y/z), then the equidistant rescale of the radius.
    x, y, z = ts, np.full_like(ts, 0.5), np.full_like(ts, 2.0)
    rp = np.hypot(x / z, y / z)
    r = a * np.arctan(rp)
    expected = np.column_stack([r * (x / z) / rp, r * (y / z) / rp]) + PP
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_line_curve_two_samples_endpoints():
    m = EquidistantModel(100.0, PP)
    line = Line3D([1.0, 0.0, 0.0], [0.0, 0.5, 2.0])
    got = project_line_curve(m, line, (-1, 2), 2)
    np.testing.assert_allclose(got, [project_point(m, line.at(-1.0)), project_point(m, line.at(2.0))])


def test_line_through_camera_center_raises():
    with pytest.raises(DegeneratePoint):
        project_line_curve(EquidistantModel(100.0, PP), Line3D([0, 0, 1], [0, 0, 0]), (-1, 2), 5)
    with pytest.raises(DegeneratePoint):
        project_line_curve(EquidistantModel(100.0, PP), Line3D([1, 0, 0], [-1, 0, 0]), (0, 2), 5)
    # Center outside the sampled range is fine.
    project_line_curve(EquidistantModel(100.0, PP), Line3D([0, 0, 1], [0, 0, 0]), (0.5, 2), 5)


# --- division model ----------------------------------------------------------


def test_invert_division_examples():
    m = DivisionModel(300.0, -1e-6, PP)
    assert invert_division_radius(m, 0.0) == 0.0
    assert invert_division_radius(m, math.pi / 2) == pytest.approx(1000.0, rel=1e-12)
    pin = DivisionModel(300.0, -1e-14, PP)
    assert invert_division_radius(pin, 0.7) == pytest.approx(300 * math.tan(0.7), rel=1e-6)


def test_division_unrepresentable():
    with pytest.raises(Unrepresentable):
        # lam > 0 has no real root at large angles.
        invert_division_radius(DivisionModel(300.0, 1e-4, PP), 1.2)
    with pytest.raises(Unrepresentable):
        invert_division_radius(DivisionModel(300.0, 0.0, PP), math.radians(95))


@given(st.floats(1e-6, math.radians(95)), st.floats(150, 600), st.floats(0.05, 0.6))
def test_division_round_trip(theta, f, k):
    m = DivisionModel(f, -k / f ** 2, PP)
    r = invert_division_radius(m, theta)
    assert division_forward_angle(m, r) == pytest.approx(theta, abs=1e-9)
    if abs(theta - math.pi / 2) > 1e-6:
        assert math.tan(theta) * f * (1 + m.lam * r * r) == pytest.approx(r, rel=1e-9, abs=1e-9)


def test_division_radius_is_continuous_through_90_degrees():
    m = DivisionModel(330.0, -0.2 / 330 ** 2, PP)
    th = np.linspace(0, math.radians(95), 4001)
    r = invert_division_radius(m, th)
    assert np.all(np.diff(r) > 0)
    assert np.max(np.diff(r)) < 1.0


def test_fit_equidistant_under_one_pixel():
    poly = PolynomialFisheyeModel((20.0, 0, 0, 0), PP, max_field_angle=1.66)
    model, res = fit_division_model(poly)
    assert np.max(np.abs(res)) < 1.0
    assert res[0] == 0.0


def test_fit_calibration_under_one_pixel(rig):
    for cam in rig.cameras:
        model, res = fit_division_model(cam.model)
        assert res[0] == 0.0
        assert np.max(np.abs(res)) < 1.0, cam.camera_id
        assert model.f > 0 and model.lam < 0


def test_fit_needs_eight_samples(rig):
    with pytest.raises(DataError):
        fit_division_model(rig["front"].model, np.linspace(0, 1, 7))


def test_line_circle_under_division_model():
    m = DivisionModel(330.0, -0.25 / 330 ** 2, PP)
    rng = np.random.default_rng(3)
    for _ in range(20):
        d = rng.normal(size=3)
        q = rng.normal(size=3) + [0, 0, 3]
        line = Line3D(d, q)
        tc = -np.dot(line.direction, line.point)
        if np.linalg.norm(line.at(tc)) < 0.5:
            continue
        try:
            res = line_circle_residual(m, line, 50, (tc - 2, tc + 2))
        except Exception:
            continue
        assert res < 0.5


def test_radial_line_residual_zero():
    m = DivisionModel(330.0, -0.25 / 330 ** 2, PP)
    line = Line3D([1.0, 0.0, 0.0], [0.0, 0.0, 2.0])
    assert line_circle_residual(m, line, 50, (0.1, 3.0)) < 1e-6


def test_polynomial_is_less_circular_than_its_division_fit():
    poly = PolynomialFisheyeModel((330.0, 0.0, -60.0, 0.0), PP, max_field_angle=1.3)
    div, _ = fit_division_model(poly)
    line = Line3D([1.0, 0.0, 0.2], [0.0, 1.0, 1.5])
    assert line_circle_residual(poly, line, 50, (-2, 2)) > line_circle_residual(div, line, 50, (-2, 2))
