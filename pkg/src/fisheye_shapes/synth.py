"""Synthetic fisheye ground truth: cuboid scenes seen through the rig.

Instance masks are produced by casting one ray per output pixel (through
the inverse lens model) against every cuboid and keeping the nearest hit,
so occlusion is resolved per pixel. Contours are traced on the mask.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage
from skimage import measure

from .camera import CameraRig, Line3D, RigCamera, load_calibration, project_line_curve
from .errors import DataError, PlacementFailed
from .geometry import BinaryMask, Contour, GridSpec2D, convex_polygon_intersection_area

log = logging.getLogger(__name__)

RENDER_SCALE = 0.25  # masks at a 4x reduced native grid
EGO_FOOTPRINT = (-1.2, 4.2, -1.1, 1.1)  # x0, x1, y0, y1 meters, vehicle frame


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_objects: int = 8
    length_range: tuple = (3.6, 5.0)
    width_range: tuple = (1.6, 2.0)
    height_range: tuple = (1.3, 1.9)
    region: tuple = (-9.0, 12.0, -9.0, 9.0)  # x0, x1, y0, y1 on the ground plane
    clearance: float = 0.3  # meters kept free around the ego vehicle
    max_retries: int = 2000
    rig: CameraRig | None = None

    def __post_init__(self):
        if self.n_objects < 0:
            raise DataError("n_objects must be non-negative")
        for lo, hi in (self.length_range, self.width_range, self.height_range):
            if not 0 < lo <= hi:
                raise DataError("object size ranges must be positive and ordered")
        x0, x1, y0, y1 = self.region
        if not (x0 < x1 and y0 < y1):
            raise DataError("placement region is empty")


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Box resting on the ground: footprint center (x, y), yaw in radians."""

    x: float
    y: float
    length: float
    width: float
    height: float
    yaw: float = 0.0
    class_id: int = 0

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise DataError("cuboid dimensions must be positive")

    @property
    def axes(self) -> np.ndarray:
        """Rows are the local x, y, z axes in the vehicle frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.height / 2.0])

    @property
    def half_extents(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height]) / 2.0

    def footprint(self) -> np.ndarray:
        hx, hy = self.length / 2.0, self.width / 2.0
        local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return local @ np.array([[c, s], [-s, c]]) + [self.x, self.y]

    def corners(self) -> np.ndarray:
        fp = self.footprint()
        return np.vstack([np.column_stack([fp, np.zeros(4)]), np.column_stack([fp, np.full(4, self.height)])])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "length": self.length, "width": self.width,
                "height": self.height, "yaw": self.yaw, "class": self.class_id}


def footprints_overlap(a: Cuboid, b: Cuboid) -> bool:
    return convex_polygon_intersection_area(a.footprint(), b.footprint()) > 1e-9


def generate_scene(cfg: SceneConfig) -> list[Cuboid]:
    """Rejection-sample non-interpenetrating cuboids on the ground plane."""
    rng = np.random.default_rng(cfg.seed)
    x0, x1, y0, y1 = cfg.region
    e = EGO_FOOTPRINT
    c = cfg.clearance
    ego = Cuboid((e[0] + e[1]) / 2, (e[2] + e[3]) / 2, e[1] - e[0] + 2 * c, e[3] - e[2] + 2 * c, 1.0)
    placed: list[Cuboid] = []
    for k in range(cfg.n_objects):
        for _ in range(cfg.max_retries):
            cand = Cuboid(
                float(rng.uniform(x0, x1)),
                float(rng.uniform(y0, y1)),
                float(rng.uniform(*cfg.length_range)),
                float(rng.uniform(*cfg.width_range)),
                float(rng.uniform(*cfg.height_range)),
                float(rng.uniform(-math.pi, math.pi)),
            )
            fp = cand.footprint()
            if fp[:, 0].min() < x0 or fp[:, 0].max() > x1 or fp[:, 1].min() < y0 or fp[:, 1].max() > y1:
                continue
            if footprints_overlap(cand, ego) or any(footprints_overlap(cand, p) for p in placed):
                continue
            placed.append(cand)
            break
        else:
            raise PlacementFailed(f"could not place object {k} after {cfg.max_retries} tries")
    return placed


# ---------------------------------------------------------------------------
# Rendering


@dataclass(frozen=True, eq=False)
class RenderedInstance:
    object_index: int
    contour: Contour
    mask: BinaryMask
    pixel_count: int


@lru_cache(maxsize=16)
def _pixel_rays(model) -> tuple[np.ndarray, np.ndarray]:
    """Unit ray directions in the camera frame for every pixel center, and
    the mask of pixels inside the lens's field of view."""
    w, h = model.image_size
    xs = np.arange(w) + 0.5 - model.principal_point[0]
    ys = np.arange(h) + 0.5 - model.principal_point[1]
    dx, dy = np.meshgrid(xs, ys)
    r = np.hypot(dx, dy)
    valid = r <= model.radius(model.max_field_angle)
    th = model.field_angle(np.where(valid, r, 0.0))
    phi = np.arctan2(dy, dx)
    st = np.sin(th)
    d = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(th)], axis=-1)
    return d, valid


def _ray_box_depth(origin, dirs, box: Cuboid) -> np.ndarray:
    """Entry distance of each ray into the oriented box (inf on a miss)."""
    ax = box.axes
    o = ax @ (origin - box.center)
    d = dirs @ ax.T
    hx = box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-hx - o) * inv
        t2 = (hx - o) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tnear = np.max(np.minimum(t1, t2), axis=-1)
    tfar = np.min(np.maximum(t1, t2), axis=-1)
    hit = (tnear <= tfar) & (tfar > 0)
    return np.where(hit, np.maximum(tnear, 0.0), np.inf)


def render_labels(scene: list[Cuboid], camera: RigCamera) -> np.ndarray:
    """Per-pixel index of the nearest visible cuboid, -1 for background."""
    dirs_cam, valid = _pixel_rays(camera.model)
    dirs = dirs_cam @ camera.pose.rotation.T
    origin = camera.pose.translation
    h, w = valid.shape
    best = np.full((h, w), np.inf)
    label = np.full((h, w), -1, dtype=np.int32)
    for k, box in enumerate(scene):
        depth = _ray_box_depth(origin, dirs, box)
        nearer = valid & (depth < best)
        best[nearer] = depth[nearer]
        label[nearer] = k
    return label


def largest_component(bits: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(bits)
    if n <= 1:
        return bits.copy()
    sizes = np.bincount(lab.ravel())
    sizes[0] = 0
    return lab == int(np.argmax(sizes))


def mask_contour(bits: np.ndarray) -> np.ndarray:
    """Outer boundary of a single filled blob as (x, y) vertices.

    Marching squares at the 0.5 level on the zero-padded mask; vertices
    sit between foreground and background pixel centers, so pixel-center
    rasterization of the result gives back the mask. The loop starts at
    its top-most, then left-most vertex.
    """
    padded = np.pad(bits.astype(float), 1)
    loops = measure.find_contours(padded, 0.5, fully_connected="high")
    if not loops:
        raise DataError("mask has no foreground")
    loop = max(loops, key=len)
    pts = loop[:-1, ::-1] - 1.0 + 0.5  # (row, col) -> (x, y) pixel-center coordinates
    pts = _dedupe(pts)
    start = np.lexsort((pts[:, 0], pts[:, 1]))[0]
    return np.roll(pts, -start, axis=0)


def _dedupe(pts: np.ndarray) -> np.ndarray:
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-9, axis=1)
    pts = pts[keep]
    if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    # Drop vertices collinear with their neighbours (straight pixel runs).
    prev, nxt = np.roll(pts, 1, axis=0), np.roll(pts, -1, axis=0)
    cross = (pts[:, 0] - prev[:, 0]) * (nxt[:, 1] - pts[:, 1]) - (pts[:, 1] - prev[:, 1]) * (nxt[:, 0] - pts[:, 0])
    return pts[np.abs(cross) > 1e-9]


def render_instances(scene: list[Cuboid], camera: RigCamera, min_pixels: int = 20) -> list[RenderedInstance]:
    """Visible instances of ``scene`` in one camera, occlusion resolved.

    Objects split by occlusion keep their largest visible part; holes are
    filled. Objects with fewer than ``min_pixels`` visible pixels (behind
    the camera, outside the field of view or hidden) are skipped.
    """
    label = render_labels(scene, camera)
    w, h = camera.model.image_size
    grid = GridSpec2D(w, h)
    out = []
    for k in range(len(scene)):
        bits = label == k
        if np.count_nonzero(bits) < min_pixels:
            log.info("%s: object %d not visible, skipped", camera.camera_id, k)
            continue
        bits = ndimage.binary_fill_holes(largest_component(bits))
        n = int(np.count_nonzero(bits))
        if n < min_pixels:
            continue
        contour = Contour(mask_contour(bits))
        out.append(RenderedInstance(k, contour, BinaryMask(bits, grid), n))
    return out


def default_rig(scale: float = RENDER_SCALE) -> CameraRig:
    return load_calibration().scaled(scale)


# ---------------------------------------------------------------------------
# Open cube


def open_cube_lines(grid_density: int = 0):
    """3D segments of the cube x, y in [-1, 1], z in [0, 2] seen from the
    camera at the center of its open face: the 12 edges plus
    ``grid_density`` evenly spaced lines per direction on each closed face."""
    if grid_density < 0:
        raise DataError("grid_density must be non-negative")
    v = np.array([[x, y, z] for z in (0.0, 2.0) for y in (-1.0, 1.0) for x in (-1.0, 1.0)])
    edges = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.count_nonzero(v[i] != v[j]) == 1:
                edges.append((v[i], v[j]))
    fr = np.linspace(-1.0, 1.0, grid_density + 2)[1:-1]
    lines = list(edges)
    for s in fr:
        # Far face z = 2.
        lines.append((np.array([s, -1, 2.0]), np.array([s, 1, 2.0])))
        lines.append((np.array([-1, s, 2.0]), np.array([1, s, 2.0])))
        for side in (-1.0, 1.0):
            # Side faces x = +-1 and y = +-1.
            lines.append((np.array([side, s, 0.0]), np.array([side, s, 2.0])))
            lines.append((np.array([s, side, 0.0]), np.array([s, side, 2.0])))
        zs = 1.0 + s
        for side in (-1.0, 1.0):
            lines.append((np.array([side, -1, zs]), np.array([side, 1, zs])))
            lines.append((np.array([-1, side, zs]), np.array([1, side, zs])))
    return lines


def render_open_cube(model, grid_density: int = 0, n_samples: int = 64) -> list[np.ndarray]:
    """Image curves of the open cube's edges and grid lines as polylines."""
    curves = []
    for a, b in open_cube_lines(grid_density):
        seg = b - a
        length = float(np.linalg.norm(seg))
        curves.append(project_line_curve(model, Line3D(seg, a), (0.0, length), n_samples))
    return curves
