"""Capacity (mIoU) and detection (AP) evaluation."""

from __future__ import annotations

import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .camera import CAMERA_IDS
from .detect_math import shape_iou
from .errors import DataError, EmptyGroundTruth, FisheyeShapesError
from .fitting import REPRESENTATIONS, CurvedBoxSearchConfig, contour_mask, fit_representation
from .geometry import BinaryMask, Contour, polygon_mask_iou
from .shapes import param_count, shape_to_polygon

log = logging.getLogger(__name__)

VERTEX_COUNTS = (4, 12, 24, 36, 60, 120)
MONOTONE_NOISE = 0.005


@dataclass(frozen=True, eq=False)
class ObjectSample:
    image_id: str
    camera_id: str
    contour: Contour
    mask: BinaryMask | None = None  # native-resolution instance mask
    class_id: int = 0


@dataclass
class EvaluationReport:
    """Per (camera, representation) IoU lists plus optional mAP values.

    Means use exactly rounded sums, so the report does not depend on the
    order objects were evaluated in.
    """

    kinds: tuple = REPRESENTATIONS
    cameras: tuple = CAMERA_IDS
    ious: dict = field(default_factory=lambda: defaultdict(list))
    failures: dict = field(default_factory=lambda: defaultdict(int))
    ap: dict = field(default_factory=dict)  # (camera or "all", kind) -> AP

    def add(self, camera: str, kind: str, iou: float):
        if not 0.0 <= iou <= 1.0 + 1e-12:
            raise DataError(f"IoU {iou} outside [0, 1]")
        self.ious[(camera, kind)].append(min(float(iou), 1.0))

    def merge(self, other: "EvaluationReport") -> "EvaluationReport":
        out = EvaluationReport(self.kinds, self.cameras)
        for src in (self, other):
            for k, v in src.ious.items():
                out.ious[k].extend(v)
            for k, v in src.failures.items():
                out.failures[k] += v
            out.ap.update(src.ap)
        return out

    def count(self, camera: str | None, kind: str) -> int:
        if camera is None:
            return sum(len(self.ious.get((c, kind), ())) for c in self.cameras)
        return len(self.ious.get((camera, kind), ()))

    def miou(self, camera: str | None, kind: str) -> float | None:
        """Mean IoU for one camera, or object-weighted over all cameras."""
        if camera is None:
            vals = [x for c in self.cameras for x in self.ious.get((c, kind), ())]
        else:
            vals = self.ious.get((camera, kind), [])
        if not vals:
            return None
        return math.fsum(vals) / len(vals)

    def object_count(self) -> int:
        return max((self.count(None, k) for k in self.kinds), default=0)

    def table(self) -> list[dict]:
        rows = []
        for kind in self.kinds:
            row = {"representation": kind}
            for c in self.cameras:
                row[c] = self.miou(c, kind)
            row["mIoU"] = self.miou(None, kind)
            row["params"] = param_count(kind)
            row["count"] = self.count(None, kind)
            row["failures"] = sum(v for (c, k), v in self.failures.items() if k == kind)
            rows.append(row)
        return rows


def object_iou(shape, sample: ObjectSample, arc_tolerance: float = 0.25) -> float:
    mask = sample.mask if sample.mask is not None else contour_mask(sample.contour)
    return polygon_mask_iou(shape_to_polygon(shape, arc_tolerance).vertices, mask)


def _evaluate_object(args):
    sample, kinds, curved_cfg, lenient = args
    out = []
    mask = sample.mask if sample.mask is not None else contour_mask(sample.contour)
    for kind in kinds:
        try:
            shape = fit_representation(kind, sample.contour, mask, curved_cfg)
            out.append((kind, polygon_mask_iou(shape_to_polygon(shape).vertices, mask), None))
        except FisheyeShapesError as exc:
            if not lenient:
                raise
            out.append((kind, None, f"{type(exc).__name__}: {exc}"))
    return sample.image_id, sample.camera_id, out


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("FISHEYE_SHAPES_WORKERS", "1"))
    return max(1, workers)


def representation_miou(dataset: Iterable[ObjectSample], kinds: Sequence[str] = REPRESENTATIONS,
                        curved_cfg: CurvedBoxSearchConfig | None = None, lenient: bool = True,
                        workers: int | None = None) -> EvaluationReport:
    """Fit every representation to every object and score it against the
    object's mask on the native pixel grid.

    With ``lenient`` set, objects whose fit fails are logged and counted as
    failures instead of aborting the run.
    """
    samples = list(dataset)
    kinds = tuple(dict.fromkeys(kinds))
    report = EvaluationReport(kinds)
    jobs = [(s, tuple(kinds), curved_cfg, lenient) for s in samples]
    n = _workers(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_evaluate_object, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        results = [_evaluate_object(j) for j in jobs]
    for image_id, camera, res in results:
        for kind, iou, err in res:
            if err is not None:
                log.warning("image %s: %s fit failed: %s", image_id, kind, err)
                report.failures[(camera, kind)] += 1
            else:
                report.add(camera, kind, iou)
    return report


def vertex_count_study(dataset: Iterable[ObjectSample], ns: Sequence[int] = VERTEX_COUNTS,
                       workers: int | None = None) -> dict[int, float]:
    """mIoU of the uniform-perimeter polygon for each vertex count."""
    kinds = [f"poly{n}" for n in ns]
    rep = representation_miou(dataset, kinds, workers=workers)
    return {n: rep.miou(None, k) for n, k in zip(ns, kinds)}


def is_monotone(values: Sequence[float], noise: float = MONOTONE_NOISE) -> bool:
    """Non-decreasing up to ``noise`` (absolute, in IoU units)."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) >= -noise))


# ---------------------------------------------------------------------------
# Average precision


@dataclass(frozen=True)
class APResult:
    per_class: dict  # class_id -> AP
    mAP: float
    mean_match_iou: float | None
    n_matches: int


def all_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the precision envelope (all-point interpolation)."""
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    p = np.maximum.accumulate(p[::-1])[::-1]
    steps = np.flatnonzero(r[1:] != r[:-1])
    return float(np.sum((r[steps + 1] - r[steps]) * p[steps + 1]))


def _bbox(shape) -> np.ndarray:
    v = shape_to_polygon(shape).vertices
    return np.concatenate([v.min(axis=0), v.max(axis=0)])


def average_precision(predictions: Sequence, ground_truth: Sequence, iou_thresh: float = 0.5,
                      iou_fn: Callable | None = None) -> APResult:
    """Greedy confidence-ordered matching, one match per ground truth.

    Both inputs are DetectionRecord-like (shape, class_id, confidence,
    image_id). Classes without ground truth are excluded from the mean.
    """
    if not 0 <= iou_thresh <= 1:
        raise DataError("iou_thresh must lie in [0, 1]")
    iou_fn = iou_fn or shape_iou
    gts = defaultdict(list)
    for k, g in enumerate(ground_truth):
        gts[(g.image_id, g.class_id)].append(k)
    gt_box = [_bbox(g.shape) for g in ground_truth]
    classes = sorted({g.class_id for g in ground_truth} | {p.class_id for p in predictions})
    per_class = {}
    match_ious = []
    for c in classes:
        n_gt = sum(len(v) for (img, cc), v in gts.items() if cc == c)
        order = sorted((i for i, p in enumerate(predictions) if p.class_id == c),
                       key=lambda i: (-predictions[i].confidence, i))
        if n_gt == 0:
            log.info("class %s has no ground truth; AP undefined and excluded", c)
            continue
        used = set()
        tp = np.zeros(len(order))
        for rank, i in enumerate(order):
            p = predictions[i]
            pb = _bbox(p.shape)
            best, best_k = -1.0, None
            for k in gts.get((p.image_id, c), ()):
                if k in used:
                    continue
                b = gt_box[k]
                if pb[0] >= b[2] or b[0] >= pb[2] or pb[1] >= b[3] or b[1] >= pb[3]:
                    continue
                iou = iou_fn(p.shape, ground_truth[k].shape)
                if iou > best:
                    best, best_k = iou, k
            if best_k is not None and best >= iou_thresh:
                used.add(best_k)
                tp[rank] = 1
                match_ious.append(best)
        ctp = np.cumsum(tp)
        recall = ctp / n_gt
        precision = ctp / np.arange(1, len(order) + 1)
        per_class[c] = all_point_ap(recall, precision) if len(order) else 0.0
    if not per_class:
        raise EmptyGroundTruth("no class has ground truth; mAP is undefined")
    m = math.fsum(per_class.values()) / len(per_class)
    mi = math.fsum(match_ious) / len(match_ious) if match_ious else None
    return APResult(per_class, m, mi, len(match_ious))
