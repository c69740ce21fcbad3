import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fisheye_shapes.camera import load_calibration
from fisheye_shapes.metrics import ObjectSample
from fisheye_shapes.synth import SceneConfig, generate_scene, render_instances

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def rig():
    return load_calibration()


@pytest.fixture(scope="session")
def small_rig(rig):
    return rig.scaled(0.25)


def synthetic_corpus(rig, n_objects: int, seed: int = 0):
    """Render scenes through every camera until ``n_objects`` instances exist."""
    out = []
    scene_id = 0
    while len(out) < n_objects:
        scene = generate_scene(SceneConfig(seed=seed * 100_003 + scene_id))
        for cam in rig.cameras:
            for inst in render_instances(scene, cam):
                out.append(ObjectSample(f"{scene_id}-{cam.camera_id}", cam.camera_id, inst.contour, inst.mask))
        scene_id += 1
    return out[:n_objects]


@pytest.fixture(scope="session")
def corpus40(small_rig):
    return synthetic_corpus(small_rig, 40, seed=7)


def circle_points(r=10.0, n=64, c=(0.0, 0.0), phase=0.0):
    t = phase + np.arange(n) * 2 * np.pi / n
    return np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)])


def random_convex(rng, n=12, scale=10.0, center=(0.0, 0.0)):
    from fisheye_shapes.geometry import convex_hull

    while True:
        pts = rng.normal(size=(n, 2)) * scale + center
        try:
            return convex_hull(pts).vertices
        except Exception:
            continue


# Acceptance verdicts, echoed in the terminal summary so they survive capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
