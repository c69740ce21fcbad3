"""Best-fit procedures from an instance contour to each representation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateInput
from .geometry import (
    BinaryMask,
    Contour,
    GridSpec2D,
    axis_aligned_rect,
    min_area_rect,
    min_enclosing_ellipse,
    polygon_mask_iou,
    rasterize_polygon,
)
from .sampling import AdaptiveSamplingConfig, sample_adaptive, sample_uniform_angular, sample_uniform_perimeter
from .shapes import (
    DEFAULT_ARC_TOLERANCE,
    CurvedBox,
    EllipseShape,
    OrientedBox,
    StandardBox,
    shape_to_polygon,
)


@dataclass(frozen=True)
class CurvedBoxSearchConfig:
    n_center_candidates: int = 64  # per axis side
    max_center_distance: float | None = None  # None: 8x the oriented-box diagonal
    iou_grid_resolution: float | None = None  # None: the mask's own lattice
    arc_tolerance: float = DEFAULT_ARC_TOLERANCE
    both_axes: bool = True

    def __post_init__(self):
        if self.n_center_candidates < 2:
            raise DataError("n_center_candidates must be at least 2")
        if self.max_center_distance is not None and self.max_center_distance <= 0:
            raise DataError("max_center_distance must be positive")


def _vertices(contour) -> np.ndarray:
    if isinstance(contour, Contour):
        return contour.vertices
    return Contour(contour).vertices


def fit_standard_box(contour) -> StandardBox:
    v = _vertices(contour)
    lo, hi = v.min(axis=0), v.max(axis=0)
    w, h = hi - lo
    if w <= 0 or h <= 0:
        raise DegenerateInput("contour has zero extent along an axis")
    c = (lo + hi) / 2.0
    return StandardBox(float(c[0]), float(c[1]), float(w), float(h))


def fit_oriented_box(contour, mask: BinaryMask | None = None) -> OrientedBox:
    """Minimum-area enclosing rectangle.

    When the instance mask is supplied, the axis-aligned box competes as an
    angle-0 candidate and wins if its mask IoU is strictly higher; pixel
    quantization can otherwise let a marginally smaller tilted rectangle
    cover more pixels.
    """
    v = _vertices(contour)
    box = OrientedBox.from_rect(min_area_rect(v))
    if mask is not None:
        alt = OrientedBox.from_rect(axis_aligned_rect(v))
        if alt.width > 0 and alt.height > 0:
            if polygon_mask_iou(alt.corners(), mask) > polygon_mask_iou(box.corners(), mask):
                box = alt
    return box


def fit_ellipse(contour) -> EllipseShape:
    e = min_enclosing_ellipse(_vertices(contour))
    return EllipseShape(float(e.center[0]), float(e.center[1]), 2.0 * e.a, 2.0 * e.b, e.angle)


def _point_segment_min_distance(c: np.ndarray, v: np.ndarray) -> float:
    a = v - c
    e = np.roll(v, -1, axis=0) - v
    t = np.clip(-np.einsum("ij,ij->i", a, e) / np.maximum(np.einsum("ij,ij->i", e, e), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(a + t[:, None] * e, axis=1).min())


def curved_box_candidates(box: OrientedBox, cfg: CurvedBoxSearchConfig, vertices: np.ndarray | None = None):
    """Annular-sector candidates with circle centers on the box's symmetry
    axes, log-spaced in distance on both sides.

    Per center two sectors are built: circles through the oriented box's
    corners (radii and angular extent of the corners), and, when contour
    vertices are given, the tightest sector enclosing the contour. The
    at-infinity candidate (the oriented box itself) is not included here.
    """
    phi = math.radians(box.angle)
    u = np.array([math.cos(phi), math.sin(phi)])
    v = np.array([-math.sin(phi), math.cos(phi)])
    c0 = box.center
    corners = box.corners()
    diag = math.hypot(box.width, box.height)
    dmax = cfg.max_center_distance or 8.0 * diag
    axes = [(u, box.width, box.height), (v, box.height, box.width)]
    if not cfg.both_axes:
        # Axis along the long side: the arcs replace the short edges.
        axes = [axes[0] if box.width >= box.height else axes[1]]
    out = []
    for axis, length, side in axes:
        dmin = length / 2.0 + side / 4.0
        if dmax <= dmin:
            continue
        dists = np.geomspace(dmin, dmax, cfg.n_center_candidates)
        for sign in (1.0, -1.0):
            base = math.atan2(-sign * axis[1], -sign * axis[0])
            for d in dists:
                center = c0 + sign * d * axis
                rel = corners - center
                rc = np.linalg.norm(rel, axis=1)
                ac = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - base + math.pi, 2 * math.pi) - math.pi
                out.append(CurvedBox(float(center[0]), float(center[1]), float(rc.min()), float(rc.max()),
                                     base + float(ac.min()), base + float(ac.max())))
                if vertices is not None:
                    relv = vertices - center
                    av = np.mod(np.arctan2(relv[:, 1], relv[:, 0]) - base + math.pi, 2 * math.pi) - math.pi
                    r_in = _point_segment_min_distance(center, vertices)
                    r_out = float(np.linalg.norm(relv, axis=1).max())
                    if r_out > r_in:
                        out.append(CurvedBox(float(center[0]), float(center[1]), r_in, r_out,
                                             base + float(av.min()), base + float(av.max())))
    return out


def fit_curved_box(contour, mask: BinaryMask, cfg: CurvedBoxSearchConfig | None = None) -> CurvedBox:
    """Search circle centers along the oriented box's axis lines for the
    annular sector with the highest mask IoU.

    The at-infinity candidate is the oriented box itself and is tried
    first, so the result never scores below the oriented box.
    """
    cfg = cfg or CurvedBoxSearchConfig()
    v = _vertices(contour)
    box = fit_oriented_box(v, mask)
    limit = CurvedBox.from_oriented(box)

    search_mask = mask
    if cfg.iou_grid_resolution is not None and cfg.iou_grid_resolution != mask.grid.resolution:
        lo, hi = v.min(axis=0), v.max(axis=0)
        res = cfg.iou_grid_resolution
        w = int(math.ceil((hi[0] - lo[0]) * res)) + 4
        h = int(math.ceil((hi[1] - lo[1]) * res)) + 4
        search_mask = rasterize_polygon(v, GridSpec2D(w, h, res, (lo[0] - 2 / res, lo[1] - 2 / res)))

    def score(shape):
        return polygon_mask_iou(shape_to_polygon(shape, cfg.arc_tolerance).vertices, search_mask)

    best, best_iou = limit, score(limit)
    for cand in curved_box_candidates(box, cfg, v):
        s = score(cand)
        if s > best_iou:
            best, best_iou = cand, s
    if search_mask is not mask and best is not limit:
        native = polygon_mask_iou(shape_to_polygon(best, cfg.arc_tolerance).vertices, mask)
        if native <= polygon_mask_iou(shape_to_polygon(limit, cfg.arc_tolerance).vertices, mask):
            best = limit
    return best


# ---------------------------------------------------------------------------
# Representation registry

REPRESENTATIONS = ("standard", "curved", "oriented", "ellipse", "poly4", "poly24", "poly24-adaptive")

_POLY = re.compile(r"^(poly|angular)(\d+)(-adaptive)?$")


def contour_mask(contour, grid: GridSpec2D | None = None) -> BinaryMask:
    """Rasterized instance mask for a contour on the native pixel grid."""
    v = _vertices(contour)
    if grid is None:
        hi = v.max(axis=0)
        grid = GridSpec2D(int(math.ceil(hi[0])) + 2, int(math.ceil(hi[1])) + 2)
        if v.min() < 0:
            raise DataError("contour has negative coordinates; pass an explicit grid")
    return rasterize_polygon(v, grid)


def fit_representation(kind: str, contour, mask: BinaryMask | None = None, curved_cfg: CurvedBoxSearchConfig | None = None):
    """Fit one named representation ('standard', 'poly24-adaptive', ...)."""
    if kind == "standard":
        return fit_standard_box(contour)
    if kind == "oriented":
        return fit_oriented_box(contour, mask)
    if kind == "ellipse":
        return fit_ellipse(contour)
    if kind == "curved":
        if mask is None:
            mask = contour_mask(contour)
        return fit_curved_box(contour, mask, curved_cfg)
    m = _POLY.match(kind)
    if m:
        n = int(m.group(2))
        if m.group(1) == "angular":
            return sample_uniform_angular(contour, n)
        if m.group(3):
            return sample_adaptive(contour, AdaptiveSamplingConfig(target_vertices=n))
        return sample_uniform_perimeter(contour, n)
    raise DataError(f"unknown representation {kind!r}")
