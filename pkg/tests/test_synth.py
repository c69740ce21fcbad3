import math

import numpy as np
import pytest

from fisheye_shapes.camera import CameraPose, Line3D, RigCamera, fit_division_model, line_circle_residual, rotation_from_ypr
from fisheye_shapes.errors import DataError, PlacementFailed
from fisheye_shapes.fitting import fit_standard_box
from fisheye_shapes.geometry import mask_iou, polygon_mask_iou, rasterize_polygon
from fisheye_shapes.metrics import representation_miou
from fisheye_shapes.shapes import shape_to_polygon
from fisheye_shapes.synth import (
    Cuboid,
    SceneConfig,
    footprints_overlap,
    generate_scene,
    open_cube_lines,
    render_instances,
    render_open_cube,
)

from conftest import synthetic_corpus


@pytest.fixture(scope="module")
def level_camera(small_rig):
    """Front lens, mounted level at 0.9 m so the optical axis is horizontal."""
    pose = CameraPose(rotation_from_ypr(0.0, 0.0), [0.0, 0.0, 0.9])
    return RigCamera("front", pose, small_rig["front"].model)


def std_iou(inst):
    return polygon_mask_iou(shape_to_polygon(fit_standard_box(inst.contour)).vertices, inst.mask)


def test_scene_deterministic_and_empty():
    a = generate_scene(SceneConfig(seed=5))
    b = generate_scene(SceneConfig(seed=5))
    assert [c.to_dict() for c in a] == [c.to_dict() for c in b]
    assert generate_scene(SceneConfig(seed=5, n_objects=0)) == []


def test_fifty_objects_do_not_overlap():
    cfg = SceneConfig(seed=1, n_objects=50, region=(-40, 40, -40, 40))
    scene = generate_scene(cfg)
    assert len(scene) == 50
    for i in range(50):
        for j in range(i + 1, 50):
            assert not footprints_overlap(scene[i], scene[j])


def test_placement_failure_and_validation():
    with pytest.raises(PlacementFailed):
        generate_scene(SceneConfig(n_objects=30, region=(-8, 8, -8, 8), max_retries=50))
    with pytest.raises(DataError):
        SceneConfig(n_objects=-1)
    with pytest.raises(DataError):
        Cuboid(0, 0, 0, 1, 1)


def test_cuboid_ahead_is_box_like(level_camera):
    inst = render_instances([Cuboid(12.0, 0.0, 4.5, 1.8, 1.6, 0.4)], level_camera)
    assert len(inst) == 1
    assert std_iou(inst[0]) > 0.8


def test_periphery_lowers_standard_box_iou(level_camera):
    def at(az_deg, rel_yaw, d=5.0):
        a = math.radians(az_deg)
        cub = Cuboid(d * math.cos(a), d * math.sin(a), 4.5, 1.8, 1.6, rel_yaw + a)
        return std_iou(render_instances([cub], level_camera)[0])

    # Same cuboid, end-on to the camera, at 5 and 80 degrees off axis.
    assert at(80, 0.0) < at(5, 0.0)
    # Averaged over the cuboid's yaw relative to the line of sight.
    yaws = np.linspace(0, math.pi, 7, endpoint=False)
    assert np.mean([at(80, y) for y in yaws]) < np.mean([at(5, y) for y in yaws])


def test_fully_occluded_object_dropped(level_camera):
    front = Cuboid(6.0, 0.0, 2.0, 4.0, 3.0)
    hidden = Cuboid(12.0, 0.0, 1.0, 1.0, 1.0)
    inst = render_instances([front, hidden], level_camera)
    assert [i.object_index for i in inst] == [0]


def test_contours_rasterize_back_to_masks(small_rig):
    scene = generate_scene(SceneConfig(seed=3))
    n = 0
    for cam in small_rig.cameras:
        for inst in render_instances(scene, cam):
            back = rasterize_polygon(inst.contour.vertices, inst.mask.grid)
            assert mask_iou(back, inst.mask) >= 0.99
            n += 1
    assert n > 0


def test_rendering_deterministic(small_rig):
    scene = generate_scene(SceneConfig(seed=4))
    cam = small_rig["left"]
    a = render_instances(scene, cam)
    b = render_instances(scene, cam)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.contour.vertices, y.contour.vertices)
        np.testing.assert_array_equal(x.mask.bits, y.mask.bits)


def test_side_cameras_lower_standard_miou(small_rig):
    corpus = synthetic_corpus(small_rig, 160, seed=2)
    rep = representation_miou(corpus, ["standard"])
    side = np.mean([rep.miou(c, "standard") for c in ("left", "right")])
    fr = np.mean([rep.miou(c, "standard") for c in ("front", "rear")])
    assert side < fr


# --- open cube --------------------------------------------------------------------


def test_open_cube_edges_only():
    assert len(open_cube_lines(0)) == 12
    assert len(open_cube_lines(3)) == 12 + 3 * 10


def test_open_cube_division_curves_are_circles(rig):
    model = rig["front"].model
    div, _ = fit_division_model(model)
    for a, b in open_cube_lines(4):
        seg = b - a
        line = Line3D(seg, a)
        assert line_circle_residual(div, line, 50, (0.0, float(np.linalg.norm(seg)))) < 1.0


def test_open_cube_axial_lines_are_radial(rig):
    model = rig["front"].model
    curves = render_open_cube(model, grid_density=1)
    lines = open_cube_lines(1)
    pp = model.principal_point
    checked = 0
    for (a, b), curve in zip(lines, curves):
        # Lines whose plane contains the optical axis: a, b and the origin coplanar with z.
        if abs(a[0] * b[1] - a[1] * b[0]) < 1e-12:
            rel = curve - pp
            keep = np.linalg.norm(rel, axis=1) > 1e-9
            ang = np.arctan2(rel[keep, 1], rel[keep, 0])
            d = np.mod(ang - ang[0] + math.pi / 2, math.pi) - math.pi / 2
            assert np.max(np.abs(d)) < 1e-9
            checked += 1
    assert checked > 0
    assert all(len(c) == 64 for c in curves)
