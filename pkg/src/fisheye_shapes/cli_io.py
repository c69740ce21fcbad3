"""Annotation files, run configuration, SVG overlays and report tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .camera import CAMERA_IDS
from .errors import (
    DataError,
    DuplicateImageId,
    FisheyeShapesError,
    InvalidContour,
    ParseError,
    SchemaError,
    SchemaVersionMismatch,
)
from .fitting import REPRESENTATIONS
from .geometry import BinaryMask, Contour, GridSpec2D, rasterize_polygon
from .metrics import EvaluationReport
from .shapes import (
    CurvedBox,
    EllipseShape,
    OrientedBox,
    PolarPolygon,
    StandardBox,
    VertexPolygon,
    param_count,
    shape_from_dict,
    shape_to_dict,
)

SCHEMA_VERSION = "1"
DEFAULT_SPLIT = (60, 10, 30)
SPLIT_NAMES = ("train", "val", "test")

LAYER_COLORS = {
    "standard": "#1f77b4",
    "oriented": "#ff7f0e",
    "ellipse": "#2ca02c",
    "curved": "#d62728",
    "polygon": "#9467bd",
    "polar": "#8c564b",
}


@dataclass(eq=False)
class ObjectRecord:
    class_id: int
    contour: Contour
    shapes: dict = field(default_factory=dict)  # representation name -> shape
    iou: dict = field(default_factory=dict)  # representation name -> IoU vs mask
    mask_path: str | None = None
    confidence: float | None = None


@dataclass(eq=False)
class ImageRecord:
    image_id: str
    camera_id: str
    width: int
    height: int
    objects: list = field(default_factory=list)

    @property
    def grid(self) -> GridSpec2D:
        return GridSpec2D(self.width, self.height)


@dataclass(eq=False)
class AnnotationFile:
    images: list = field(default_factory=list)
    version: str = SCHEMA_VERSION

    def __post_init__(self):
        seen = {}
        for k, im in enumerate(self.images):
            if im.image_id in seen:
                raise DuplicateImageId(
                    f"image_id {im.image_id!r} appears at both images[{seen[im.image_id]}] and images[{k}]")
            seen[im.image_id] = k

    def objects(self):
        for im in self.images:
            for k, obj in enumerate(im.objects):
                yield im, k, obj


def _object_from_dict(d: dict, where: str) -> ObjectRecord:
    try:
        pts = d["contour"]
        cls_id = int(d.get("class", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed object ({exc})") from None
    try:
        contour = Contour(pts)
    except FisheyeShapesError as exc:
        raise InvalidContour(f"{where}: {exc}") from None
    shapes = {}
    for name, sd in sorted((d.get("shapes") or {}).items()):
        try:
            shapes[name] = shape_from_dict(sd)
        except FisheyeShapesError as exc:
            raise SchemaError(f"{where}: shape {name!r}: {exc}") from None
    conf = d.get("confidence")
    return ObjectRecord(cls_id, contour, shapes, dict(d.get("iou") or {}), d.get("mask"),
                        None if conf is None else float(conf))


def annotations_from_dict(data: dict, camera_ids: Sequence[str] = CAMERA_IDS) -> AnnotationFile:
    if not isinstance(data, dict):
        raise SchemaError("annotation root must be an object")
    version = str(data.get("version"))
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"annotation schema version {version!r}, expected {SCHEMA_VERSION!r}")
    images = []
    for k, im in enumerate(data.get("images", [])):
        try:
            image_id = str(im["image_id"])
            camera_id = str(im["camera_id"])
            width, height = int(im["width"]), int(im["height"])
            raw_objects = im.get("objects", [])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"images[{k}]: missing or malformed field {exc}") from None
        if camera_ids and camera_id not in camera_ids:
            raise SchemaError(f"image {image_id!r}: camera_id {camera_id!r} not in rig {list(camera_ids)}")
        objs = [_object_from_dict(o, f"image {image_id!r} object {j}") for j, o in enumerate(raw_objects)]
        images.append(ImageRecord(image_id, camera_id, width, height, objs))
    return AnnotationFile(images, version)


def load_annotations(path, camera_ids: Sequence[str] = CAMERA_IDS) -> AnnotationFile:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return annotations_from_dict(data, camera_ids)


def _obj_to_dict(obj: ObjectRecord) -> dict:
    d = {"class": obj.class_id, "contour": [[float(x), float(y)] for x, y in obj.contour.vertices]}
    if obj.shapes:
        d["shapes"] = {k: shape_to_dict(s) for k, s in obj.shapes.items()}
    if obj.iou:
        d["iou"] = {k: float(v) for k, v in obj.iou.items()}
    if obj.mask_path:
        d["mask"] = obj.mask_path
    if obj.confidence is not None:
        d["confidence"] = obj.confidence
    return d


def annotations_to_dict(af: AnnotationFile) -> dict:
    return {
        "version": af.version,
        "images": [
            {"image_id": im.image_id, "camera_id": im.camera_id, "width": im.width, "height": im.height,
             "objects": [_obj_to_dict(o) for o in im.objects]}
            for im in af.images
        ],
    }


def canonical_json(data) -> str:
    """Sorted keys, fixed separators, shortest round-trip floats."""
    return json.dumps(data, sort_keys=True, indent=1, separators=(",", ": "), allow_nan=False) + "\n"


def save_annotations(af: AnnotationFile, path, source_dir=None):
    """Write ``af`` as canonical JSON.

    Mask paths are relative to the annotation file; pass the directory they
    were read against and they are rewritten to stay valid from ``path``.
    """
    path = Path(path)
    if source_dir is not None:
        for _, _, obj in af.objects():
            if obj.mask_path and not os.path.isabs(obj.mask_path):
                full = os.path.join(os.path.abspath(source_dir), obj.mask_path)
                obj.mask_path = Path(os.path.relpath(full, os.path.abspath(path.parent))).as_posix()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(annotations_to_dict(af)))


def object_mask(image: ImageRecord, obj: ObjectRecord, base_dir=None) -> BinaryMask:
    """The stored PGM mask if present, else the contour rasterized on the
    image grid."""
    if obj.mask_path:
        p = Path(obj.mask_path)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        m = BinaryMask.from_pgm(p.read_bytes())
        if (m.width, m.height) != (image.width, image.height):
            raise DataError(f"mask {p} is {m.width}x{m.height}, image is {image.width}x{image.height}")
        return m
    return rasterize_polygon(obj.contour, image.grid, check_bounds=False)


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class RunConfig:
    calibration: str | None = None
    split: tuple = DEFAULT_SPLIT
    representations: tuple = REPRESENTATIONS
    score_thresh: float = 0.0
    iou_thresh: float = 0.5
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if len(self.split) != 3 or sum(self.split) != 100 or min(self.split) < 0:
            raise DataError(f"split ratios {self.split} must be three non-negative integers summing to 100")
        for t in (self.score_thresh, self.iou_thresh):
            if not 0 <= t <= 1:
                raise DataError("thresholds must lie in [0, 1]")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if "split" in data:
            data["split"] = tuple(data["split"])
        if "representations" in data:
            data["representations"] = tuple(data["representations"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise SchemaError(f"{path}: {exc}") from None


def split_of(image_id: str, ratios=DEFAULT_SPLIT) -> str:
    """Deterministic train/val/test bucket from a hash of the image id."""
    bucket = int.from_bytes(hashlib.sha256(image_id.encode()).digest()[:8], "big") % 100
    edge = 0
    for name, r in zip(SPLIT_NAMES, ratios):
        edge += r
        if bucket < edge:
            return name
    return SPLIT_NAMES[-1]


# ---------------------------------------------------------------------------
# SVG


def _n(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _pts_path(v: np.ndarray) -> str:
    return "M " + " L ".join(f"{_n(x)} {_n(y)}" for x, y in v) + " Z"


def _curved_path(s: CurvedBox) -> str:
    c = s.circle_center
    p = lambda r, t: c + r * np.array([math.cos(t), math.sin(t)])  # noqa: E731
    large = 1 if s.theta2 - s.theta1 > math.pi else 0
    a, b = p(s.r2, s.theta1), p(s.r2, s.theta2)
    d, e = p(s.r1, s.theta2), p(s.r1, s.theta1)
    return (f"M {_n(a[0])} {_n(a[1])} A {_n(s.r2)} {_n(s.r2)} 0 {large} 1 {_n(b[0])} {_n(b[1])} "
            f"L {_n(d[0])} {_n(d[1])} A {_n(s.r1)} {_n(s.r1)} 0 {large} 0 {_n(e[0])} {_n(e[1])} Z")


def shape_svg(shape) -> str:
    if isinstance(shape, StandardBox):
        return (f'<rect x="{_n(shape.cx - shape.width / 2)}" y="{_n(shape.cy - shape.height / 2)}" '
                f'width="{_n(shape.width)}" height="{_n(shape.height)}"/>')
    if isinstance(shape, OrientedBox):
        return f'<path d="{_pts_path(shape.corners())}"/>'
    if isinstance(shape, EllipseShape):
        return (f'<ellipse cx="{_n(shape.cx)}" cy="{_n(shape.cy)}" rx="{_n(shape.width / 2)}" '
                f'ry="{_n(shape.height / 2)}" transform="rotate({_n(shape.angle)} {_n(shape.cx)} {_n(shape.cy)})"/>')
    if isinstance(shape, CurvedBox):
        if shape.degenerate:
            return f'<path d="{_pts_path(shape.limit_box.corners())}"/>'
        return f'<path d="{_curved_path(shape)}"/>'
    if isinstance(shape, VertexPolygon):
        return f'<path d="{_pts_path(shape.absolute)}"/>'
    if isinstance(shape, PolarPolygon):
        return f'<path d="{_pts_path(shape.vertex_array())}"/>'
    raise TypeError(f"not a shape: {type(shape).__name__}")


def render_overlay(size, objects: Sequence[dict], style: dict | None = None, contours: Sequence | None = None) -> str:
    """SVG with one group per representation name.

    ``objects`` holds one ``{representation name: shape}`` dict per object.
    Output bytes depend only on the input.
    """
    w, h = size
    colors = dict(LAYER_COLORS, **(style or {}))
    names = []
    for o in objects:
        for k in o:
            if k not in names:
                names.append(k)
    order = [k for k in REPRESENTATIONS if k in names] + sorted(k for k in names if k not in REPRESENTATIONS)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" baseProfile="basic" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
    ]
    if contours:
        out.append('<g id="contours" fill="none" stroke="#000000" stroke-width="0.5">')
        out.extend(f'<path d="{_pts_path(np.asarray(c.vertices if isinstance(c, Contour) else c))}"/>' for c in contours)
        out.append("</g>")
    for name in order:
        shapes = [o[name] for o in objects if name in o]
        color = colors.get(name) or colors.get(getattr(shapes[0], "kind", ""), "#000000")
        out.append(f'<g id="layer-{name}" fill="none" stroke="{color}" stroke-width="1">')
        out.extend(shape_svg(s) for s in shapes)
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curves_svg(size, curves: Sequence[np.ndarray], color: str = "#000000") -> str:
    w, h = size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" baseProfile="basic" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<g fill="none" stroke="{color}" stroke-width="1">',
    ]
    for c in curves:
        pts = " ".join(f"{_n(x)},{_n(y)}" for x, y in c)
        lines.append(f'<polyline points="{pts}"/>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Report tables

CAMERA_COLUMNS = tuple(c.capitalize() for c in CAMERA_IDS)


def _pct(v) -> str:
    return "n/a" if v is None else f"{100.0 * v:.2f}"


def _table_rows(report) -> tuple[list[str], list[list[str]]]:
    header = ["Representation", *CAMERA_COLUMNS, "mIoU", "params", "count"]
    rows = []
    if report.object_count() == 0:
        return header, rows
    for r in report.table():
        rows.append([r["representation"], *(_pct(r[c]) for c in report.cameras), _pct(r["mIoU"]),
                     str(r["params"]), str(r["count"])])
    return header, rows


def _emit(header, rows, fmt: str, footer: str = "") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        if footer:
            lines += ["", footer]
        return "\n".join(lines) + "\n"
    raise DataError(f"unknown report format {fmt!r}")


def emit_report(report, fmt: str = "markdown") -> str:
    """Capacity table: one row per representation, IoU in percent."""
    header, rows = _table_rows(report)
    return _emit(header, rows, fmt, f"Objects evaluated: {report.object_count()}")


def emit_vertex_table(study: dict, fmt: str = "markdown") -> str:
    header = ["N", "params", "mIoU"]
    rows = [[str(n), str(param_count(f"poly{n}")), _pct(v)] for n, v in sorted(study.items())]
    return _emit(header, rows, fmt)


def emit_map_table(results: dict, fmt: str = "markdown") -> str:
    """``results``: representation -> {camera id or 'all': APResult or None}."""
    header = ["Representation"]
    for c in CAMERA_COLUMNS:
        header += [f"{c} mAP", f"{c} IoU"]
    header += ["mAP", "IoU"]
    rows = []
    for rep, per_cam in results.items():
        row = [rep]
        for cid in (*CAMERA_IDS, "all"):
            r = per_cam.get(cid)
            row += [_pct(r.mAP if r else None), _pct(r.mean_match_iou if r else None)]
        rows.append(row)
    return _emit(header, rows, fmt)


def report_to_dict(report) -> dict:
    return {
        "kinds": list(report.kinds),
        "cameras": list(report.cameras),
        "ious": {f"{c}/{k}": v for (c, k), v in sorted(report.ious.items())},
        "failures": {f"{c}/{k}": v for (c, k), v in sorted(report.failures.items())},
    }


def report_from_dict(data: dict):
    try:
        rep = EvaluationReport(tuple(data["kinds"]), tuple(data["cameras"]))
        for key, vals in data.get("ious", {}).items():
            c, k = key.split("/", 1)
            rep.ious[(c, k)] = [float(v) for v in vals]
        for key, n in data.get("failures", {}).items():
            c, k = key.split("/", 1)
            rep.failures[(c, k)] = int(n)
    except (KeyError, ValueError, AttributeError) as exc:
        raise SchemaError(f"malformed report: {exc}") from None
    return rep
