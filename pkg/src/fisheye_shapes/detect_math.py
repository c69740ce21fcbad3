"""Numerical kernels of a YOLO-style detector with shape-aware heads.

Tensors are laid out per (cell, anchor): cell index ``i = row * S + col``.
Polar-polygon tensors use a single anchor per cell and carry a trailing
sector axis. Every differentiable regression term has a matching
``*_grad`` returning the gradient with respect to the prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    AngleOutOfRange,
    AssignmentConflict,
    CenterOutOfImage,
    DataError,
    NonConvexInput,
    NonFiniteInput,
)
from .geometry import REFERENCE_RASTER_SIZE, convex_clip_iou, raster_iou
from .shapes import (
    CurvedBox,
    EllipseShape,
    OrientedBox,
    PolarPolygon,
    StandardBox,
    VertexPolygon,
    is_convex_shape,
    shape_area,
    shape_to_polygon,
)

N_ORIENTATION_BINS = 18
ORIENTATION_BIN_WIDTH = 10.0  # degrees
EPS = 1e-12  # probability clamp inside logs


@dataclass(frozen=True)
class GridSpec:
    S: int
    B: int
    anchors: tuple  # B (w, h) pairs in pixels
    image_size: tuple = (1280, 966)  # (width, height)

    def __post_init__(self):
        if self.S < 1 or self.B < 1:
            raise DataError("grid needs S >= 1 and B >= 1")
        anchors = tuple((float(w), float(h)) for w, h in self.anchors)
        if len(anchors) != self.B:
            raise DataError(f"expected {self.B} anchors, got {len(anchors)}")
        if any(w <= 0 or h <= 0 for w, h in anchors):
            raise DataError("anchor sizes must be positive")
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_cells(self) -> int:
        return self.S * self.S

    @property
    def cell_size(self) -> tuple[float, float]:
        return self.image_size[0] / self.S, self.image_size[1] / self.S


@dataclass(frozen=True)
class LossWeights:
    lambda_coord: float = 5.0

    def __post_init__(self):
        if not self.lambda_coord > 0:
            raise DataError("lambda_coord must be positive")


@dataclass
class DetectionTensor:
    """Target or prediction tensor.

    obj: (S², B) objectness; for targets also the responsibility indicator.
    xy: (S², B, 2) center offset within the cell, in cell units.
    wh: (S², B, 2) width and height in pixels.
    cls: (S², B, C) class probabilities.
    theta: (S², B) orientation in degrees, optional.
    area: (S², B) area in pixels², optional.
    """

    obj: np.ndarray
    xy: np.ndarray
    wh: np.ndarray
    cls: np.ndarray
    theta: np.ndarray | None = None
    area: np.ndarray | None = None

    @classmethod
    def zeros(cls, grid: GridSpec, n_classes: int = 1) -> "DetectionTensor":
        n, b = grid.n_cells, grid.B
        return cls(np.zeros((n, b)), np.zeros((n, b, 2)), np.zeros((n, b, 2)), np.zeros((n, b, n_classes)),
                   np.zeros((n, b)), np.zeros((n, b)))

    def copy(self) -> "DetectionTensor":
        return DetectionTensor(*(None if a is None else np.array(a, dtype=float) for a in
                                 (self.obj, self.xy, self.wh, self.cls, self.theta, self.area)))


@dataclass
class PolarTensor:
    """Per-cell polar polygon: r, theta (radians) and alpha, each (S², N)."""

    r: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray


class BoxLoss(NamedTuple):
    xy: float
    wh: float
    obj: float
    cls: float
    total: float


class PolarLoss(NamedTuple):
    cods: float
    mask: float
    total: float


def _finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteInput("loss input contains NaN or inf")


def _conform(a, b, what: str):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DataError(f"{what}: prediction shape {a.shape} != target shape {b.shape}")
    return a, b


def _indicator(ind, shape) -> np.ndarray:
    if ind is None:
        return np.ones(shape)
    ind = np.asarray(ind, dtype=float)
    if ind.shape != shape:
        raise DataError(f"indicator shape {ind.shape} != {shape}")
    return ind


# ---------------------------------------------------------------------------
# Target assignment


def _center_wh(shape) -> tuple[float, float, float, float]:
    if isinstance(shape, (StandardBox, OrientedBox, EllipseShape)):
        return shape.cx, shape.cy, shape.width, shape.height
    if isinstance(shape, CurvedBox) and shape.degenerate:
        return _center_wh(shape.limit_box)
    v = shape_to_polygon(shape).vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    if isinstance(shape, (VertexPolygon, PolarPolygon)):
        c = shape.origin if isinstance(shape, VertexPolygon) else shape.center
    else:
        c = (lo + hi) / 2
    return float(c[0]), float(c[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])


def anchor_iou(wh, anchors) -> np.ndarray:
    """IoU of co-centered axis-aligned boxes; ``wh`` (..., 2) vs anchors (K, 2)."""
    wh = np.asarray(wh, dtype=float)[..., None, :]
    an = np.asarray(anchors, dtype=float)
    inter = np.minimum(wh[..., 0], an[:, 0]) * np.minimum(wh[..., 1], an[:, 1])
    return inter / (wh[..., 0] * wh[..., 1] + an[:, 0] * an[:, 1] - inter)


def assign_targets(objects: Sequence, grid: GridSpec, n_classes: int = 1) -> DetectionTensor:
    """Build the target tensor for ``(shape, class_id)`` pairs.

    The responsible cell holds the object center under half-open cell
    bounds; the responsible anchor has the highest centered IoU, ties to
    the lowest index. If that slot is taken the next-best free anchor is
    used, and AssignmentConflict is raised once the cell is full.
    """
    t = DetectionTensor.zeros(grid, n_classes)
    W, H = grid.image_size
    cw, ch = grid.cell_size
    for k, (shape, cls_id) in enumerate(objects):
        x, y, w, h = _center_wh(shape)
        if not (0 <= x < W and 0 <= y < H):
            raise CenterOutOfImage(f"object {k} center ({x:.2f}, {y:.2f}) is outside the {W}x{H} image")
        if not 0 <= cls_id < n_classes:
            raise DataError(f"object {k} class {cls_id} outside [0, {n_classes})")
        col = min(int(x // cw), grid.S - 1)
        row = min(int(y // ch), grid.S - 1)
        cell = row * grid.S + col
        ious = anchor_iou([w, h], grid.anchors)
        # Stable sort on -IoU keeps the lowest index first among ties.
        for j in np.argsort(-ious, kind="stable"):
            if t.obj[cell, j] == 0:
                break
        else:
            raise AssignmentConflict(f"object {k}: all {grid.B} anchors of cell ({row}, {col}) are taken")
        t.obj[cell, j] = 1.0
        t.xy[cell, j] = (x / cw - col, y / ch - row)
        t.wh[cell, j] = (w, h)
        t.cls[cell, j, cls_id] = 1.0
        t.theta[cell, j] = getattr(shape, "angle", 0.0)
        t.area[cell, j] = shape_area(shape)
    return t


# ---------------------------------------------------------------------------
# Box terms


def loss_xy(pred_xy, xy, indicator=None, weights: LossWeights = LossWeights()) -> float:
    p, t = _conform(pred_xy, xy, "xy")
    _finite(p, t)
    ind = _indicator(indicator, t.shape[:-1])
    return float(weights.lambda_coord * np.sum(ind[..., None] * (t - p) ** 2))


def loss_xy_grad(pred_xy, xy, indicator=None, weights: LossWeights = LossWeights()) -> np.ndarray:
    p, t = _conform(pred_xy, xy, "xy")
    ind = _indicator(indicator, t.shape[:-1])
    return -2.0 * weights.lambda_coord * ind[..., None] * (t - p)


def _check_sizes(*arrays):
    for a in arrays:
        if np.any(a < 0):
            raise DataError("widths and heights must be non-negative")


def loss_wh(pred_wh, wh, indicator=None, weights: LossWeights = LossWeights()) -> float:
    p, t = _conform(pred_wh, wh, "wh")
    _finite(p, t)
    _check_sizes(p, t)
    ind = _indicator(indicator, t.shape[:-1])
    return float(weights.lambda_coord * np.sum(ind[..., None] * (np.sqrt(t) - np.sqrt(p)) ** 2))


def loss_wh_grad(pred_wh, wh, indicator=None, weights: LossWeights = LossWeights()) -> np.ndarray:
    p, t = _conform(pred_wh, wh, "wh")
    ind = _indicator(indicator, t.shape[:-1])
    sp = np.sqrt(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = -weights.lambda_coord * ind[..., None] * (np.sqrt(t) - sp) / sp
    return np.where(ind[..., None] > 0, g, 0.0)


def binary_cross_entropy(pred, target) -> float:
    p = np.clip(np.asarray(pred, dtype=float), EPS, 1 - EPS)
    t = np.asarray(target, dtype=float)
    return float(-np.sum(t * np.log(p) + (1 - t) * np.log(1 - p)))


def loss_obj(pred_obj, obj) -> float:
    """Binary cross-entropy over every (cell, anchor), including the
    no-object term."""
    p, t = _conform(pred_obj, obj, "objectness")
    _finite(p, t)
    if np.any((p < 0) | (p > 1)) or np.any((t < 0) | (t > 1)):
        raise DataError("objectness must lie in [0, 1]")
    return binary_cross_entropy(p, t)


def loss_class(pred_cls, cls, indicator=None) -> float:
    p, t = _conform(pred_cls, cls, "class")
    _finite(p, t)
    if np.any((p < 0) | (p > 1)):
        raise DataError("class probabilities must lie in [0, 1]")
    ind = _indicator(indicator, t.shape[:-1])
    return float(-np.sum(ind[..., None] * t * np.log(np.clip(p, EPS, 1.0))))


def loss_box(pred: DetectionTensor, target: DetectionTensor, grid: GridSpec | None = None,
             weights: LossWeights = LossWeights()) -> BoxLoss:
    ind = np.asarray(target.obj, dtype=float)
    if grid is not None and ind.shape != (grid.n_cells, grid.B):
        raise DataError(f"tensor shape {ind.shape} does not match grid ({grid.n_cells}, {grid.B})")
    lxy = loss_xy(pred.xy, target.xy, ind, weights)
    lwh = loss_wh(pred.wh, target.wh, ind, weights)
    lobj = loss_obj(pred.obj, target.obj)
    lcls = loss_class(pred.cls, target.cls, ind)
    return BoxLoss(lxy, lwh, lobj, lcls, lxy + lwh + lobj + lcls)


def entropy_floor(target: DetectionTensor) -> float:
    """Cross-entropy terms evaluated at prediction == target; the smallest
    value L_obj + L_class can reach. Zero for hard 0/1 targets."""
    return loss_obj(target.obj, target.obj) + loss_class(target.cls, target.cls, target.obj)


def excess_loss(pred: DetectionTensor, target: DetectionTensor, grid: GridSpec | None = None,
                weights: LossWeights = LossWeights()) -> float:
    return loss_box(pred, target, grid, weights).total - entropy_floor(target)


# ---------------------------------------------------------------------------
# Orientation


def _check_angles(theta):
    a = np.asarray(theta, dtype=float)
    _finite(a)
    if np.any((a < -90.0) | (a >= 90.0)):
        raise AngleOutOfRange("orientation angles must lie in [-90, 90)")
    return a


def orientation_bin(theta) -> np.ndarray:
    """Bin k covers [-90 + 10k, -80 + 10k) degrees."""
    a = _check_angles(theta)
    return np.minimum(np.floor((a + 90.0) / ORIENTATION_BIN_WIDTH).astype(int), N_ORIENTATION_BINS - 1)


def orientation_bin_center(k) -> np.ndarray:
    k = np.asarray(k)
    if np.any((k < 0) | (k >= N_ORIENTATION_BINS)):
        raise DataError(f"orientation bin outside [0, {N_ORIENTATION_BINS})")
    return -90.0 + ORIENTATION_BIN_WIDTH * (k + 0.5)


def orientation_bin_roundtrip(theta) -> np.ndarray:
    return orientation_bin_center(orientation_bin(theta))


def angle_difference(a, b, wrapped: bool = False) -> np.ndarray:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if wrapped:
        # Orientation has period 180: -89 and 89 are 2 degrees apart.
        d = np.mod(d + 90.0, 180.0) - 90.0
    return d


def loss_orientation(pred, theta, mode: str = "regression", indicator=None, wrapped: bool = False) -> float:
    """Squared angle error in degrees², or 18-bin cross-entropy.

    For ``classification`` the prediction holds bin probabilities with a
    trailing axis of 18.
    """
    t = _check_angles(theta)
    ind = _indicator(indicator, t.shape)
    if mode == "regression":
        p = _check_angles(pred)
        if p.shape != t.shape:
            raise DataError(f"orientation: prediction shape {p.shape} != target shape {t.shape}")
        return float(np.sum(ind * angle_difference(t, p, wrapped) ** 2))
    if mode == "classification":
        p = np.asarray(pred, dtype=float)
        if p.shape != t.shape + (N_ORIENTATION_BINS,):
            raise DataError(f"orientation scores need shape {t.shape + (N_ORIENTATION_BINS,)}, got {p.shape}")
        _finite(p)
        if np.any((p < 0) | (p > 1)):
            raise DataError("bin probabilities must lie in [0, 1]")
        k = orientation_bin(t)
        pk = np.take_along_axis(p, k[..., None], axis=-1)[..., 0]
        return float(-np.sum(ind * np.log(np.clip(pk, EPS, 1.0))))
    raise DataError(f"unknown orientation loss mode {mode!r}")


def loss_orientation_grad(pred, theta, indicator=None, wrapped: bool = False) -> np.ndarray:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(theta, dtype=float)
    ind = _indicator(indicator, t.shape)
    return -2.0 * ind * angle_difference(t, p, wrapped)


def orientation_one_hot(theta) -> np.ndarray:
    k = orientation_bin(theta)
    return np.eye(N_ORIENTATION_BINS)[k]


# ---------------------------------------------------------------------------
# Area


def loss_area(pred_area, area, indicator=None, weights: LossWeights = LossWeights()) -> float:
    p, t = _conform(pred_area, area, "area")
    _finite(p, t)
    if np.any(p < 0) or np.any(t < 0):
        raise DataError("areas must be non-negative")
    ind = _indicator(indicator, t.shape)
    return float(weights.lambda_coord * np.sum(ind * (t - p) ** 2))


def loss_area_grad(pred_area, area, indicator=None, weights: LossWeights = LossWeights()) -> np.ndarray:
    p, t = _conform(pred_area, area, "area")
    ind = _indicator(indicator, t.shape)
    return -2.0 * weights.lambda_coord * ind * (t - p)


# ---------------------------------------------------------------------------
# Polar polygon


def loss_cods(pred: PolarTensor, target: PolarTensor) -> float:
    """Sum of alpha-hat weighted squared radius and angle (radian) errors."""
    r, rt = _conform(pred.r, target.r, "r")
    th, tt = _conform(pred.theta, target.theta, "theta")
    ah = np.asarray(pred.alpha, dtype=float)
    if ah.shape != r.shape or th.shape != r.shape:
        raise DataError("polar tensors must share one shape")
    _finite(r, rt, th, tt, ah)
    return float(np.sum(ah * ((rt - r) ** 2 + (tt - th) ** 2)))


def loss_cods_grad(pred: PolarTensor, target: PolarTensor) -> PolarTensor:
    r, th, ah = (np.asarray(a, dtype=float) for a in (pred.r, pred.theta, pred.alpha))
    dr = np.asarray(target.r, dtype=float) - r
    dt = np.asarray(target.theta, dtype=float) - th
    return PolarTensor(-2.0 * ah * dr, -2.0 * ah * dt, dr ** 2 + dt ** 2)


def loss_mask(pred_alpha, alpha) -> float:
    p, t = _conform(pred_alpha, alpha, "alpha")
    _finite(p, t)
    active = t != 0
    if np.any((p[active] <= 0) | (p[active] > 1)):
        raise DataError("predicted alpha must lie in (0, 1] where the target alpha is set")
    return float(-np.sum(t[active] * np.log(p[active])))


def loss_polar_polygon(pred: PolarTensor, target: PolarTensor, n_sectors: int,
                       box_pred: DetectionTensor | None = None, box_target: DetectionTensor | None = None,
                       weights: LossWeights = LossWeights()) -> PolarLoss:
    """Polar-polygon loss with one anchor per cell.

    Theta is in radians. When box tensors are given their center,
    objectness and class terms are added to the total.
    """
    if np.shape(target.r)[-1] != n_sectors:
        raise DataError(f"expected {n_sectors} sectors, got {np.shape(target.r)[-1]}")
    lc = loss_cods(pred, target)
    lm = loss_mask(pred.alpha, target.alpha)
    total = lc + lm
    if box_pred is not None and box_target is not None:
        ind = np.asarray(box_target.obj, dtype=float)
        total += (loss_xy(box_pred.xy, box_target.xy, ind, weights) + loss_obj(box_pred.obj, box_target.obj)
                  + loss_class(box_pred.cls, box_target.cls, ind))
    return PolarLoss(lc, lm, total)


def polar_target(poly: PolarPolygon) -> PolarTensor:
    return PolarTensor(poly.radii[None, :].copy(), poly.thetas[None, :].copy(),
                       np.minimum(poly.alphas, 1)[None, :].astype(float))


# ---------------------------------------------------------------------------
# Anchors


def kmeans_anchors(wh, k: int, seed: int = 0, max_iter: int = 300) -> np.ndarray:
    """k-means over (w, h) with 1 - IoU distance; anchors sorted by area."""
    wh = np.asarray(wh, dtype=float)
    if wh.ndim != 2 or wh.shape[1] != 2 or len(wh) < k or k < 1:
        raise DataError(f"need at least k={k} (w, h) rows")
    _finite(wh)
    if np.any(wh <= 0):
        raise DataError("box sizes must be positive")
    rng = np.random.default_rng(seed)
    uniq = np.unique(wh, axis=0)
    if len(uniq) < k:
        raise DataError(f"only {len(uniq)} distinct sizes for k={k}")
    centers = uniq[rng.choice(len(uniq), k, replace=False)]
    labels = None
    for _ in range(max_iter):
        new = np.argmax(anchor_iou(wh, centers), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = wh[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers[np.argsort(centers.prod(axis=1), kind="stable")]


# ---------------------------------------------------------------------------
# NMS


@dataclass(frozen=True)
class DetectionRecord:
    shape: object
    class_id: int
    confidence: float
    image_id: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")


def shape_iou(a, b, arc_tolerance: float = 0.25, raster_size: int = REFERENCE_RASTER_SIZE) -> float:
    """Exact clipping for convex shapes, mask IoU on a shared grid otherwise."""
    pa = shape_to_polygon(a, arc_tolerance)
    pb = shape_to_polygon(b, arc_tolerance)
    if is_convex_shape(a) and is_convex_shape(b):
        try:
            return convex_clip_iou(pa, pb)
        except NonConvexInput:
            pass
    return raster_iou(pa, pb, raster_size)


def _bbox(shape) -> np.ndarray:
    v = shape_to_polygon(shape).vertices
    return np.concatenate([v.min(axis=0), v.max(axis=0)])


def nms_generalized(detections: Sequence[DetectionRecord], iou_fn: Callable | None = None,
                    score_thresh: float = 0.0, iou_thresh: float = 0.5) -> list[DetectionRecord]:
    """Greedy per-class suppression in (confidence desc, input index) order."""
    if not (0 <= score_thresh <= 1 and 0 <= iou_thresh <= 1):
        raise DataError("thresholds must lie in [0, 1]")
    iou_fn = iou_fn or shape_iou
    idx = [i for i, d in enumerate(detections) if d.confidence >= score_thresh]
    idx.sort(key=lambda i: (-detections[i].confidence, i))
    boxes = {i: _bbox(detections[i].shape) for i in idx}
    keep: list[int] = []
    for i in idx:
        d = detections[i]
        bi = boxes[i]
        suppressed = False
        for j in keep:
            if detections[j].class_id != d.class_id:
                continue
            bj = boxes[j]
            # Disjoint bounding boxes cannot overlap.
            if bi[0] >= bj[2] or bj[0] >= bi[2] or bi[1] >= bj[3] or bj[1] >= bi[3]:
                continue
            if iou_fn(detections[j].shape, d.shape) > iou_thresh:
                suppressed = True
                break
        if not suppressed:
            keep.append(i)
    return [detections[i] for i in keep]
