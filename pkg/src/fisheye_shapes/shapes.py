"""Object representations: boxes, ellipse, curved box and polygons.

All shapes are immutable. Angles of boxes and ellipses are in degrees,
curved-box and polar-polygon angles in radians; both are measured from the
image x-axis toward +y (downward).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import Contour, RotatedRect, polygon_area, wrap_angle_deg

DEFAULT_ARC_TOLERANCE = 0.25  # pixels

KINDS = ("standard", "oriented", "ellipse", "curved", "polygon", "polar")


def _f(x) -> float:
    return float(x)


@dataclass(frozen=True)
class StandardBox:
    cx: float
    cy: float
    width: float
    height: float
    kind = "standard"

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DataError("box width and height must be positive")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def corners(self) -> np.ndarray:
        x0, x1 = self.cx - self.width / 2, self.cx + self.width / 2
        y0, y1 = self.cy - self.height / 2, self.cy + self.height / 2
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.width, self.height])


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    width: float
    height: float
    angle: float  # degrees in [-90, 90); width lies along this direction
    kind = "oriented"

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DataError("box width and height must be positive")
        if not -90.0 <= self.angle < 90.0:
            raise DataError(f"oriented box angle {self.angle} outside [-90, 90)")

    @classmethod
    def from_rect(cls, rect: RotatedRect) -> "OrientedBox":
        return cls(_f(rect.center[0]), _f(rect.center[1]), _f(rect.width), _f(rect.height), wrap_angle_deg(rect.angle))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def rect(self) -> RotatedRect:
        return RotatedRect(self.center, self.width, self.height, self.angle)

    def corners(self) -> np.ndarray:
        return self.rect().corners()

    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.width, self.height, self.angle])


@dataclass(frozen=True)
class EllipseShape:
    cx: float
    cy: float
    width: float  # full major axis
    height: float  # full minor axis
    angle: float  # degrees, major-axis direction
    kind = "ellipse"

    def __post_init__(self):
        if not (self.width >= self.height > 0):
            raise DataError("ellipse needs width >= height > 0")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.width, self.height, self.angle])


@dataclass(frozen=True)
class CurvedBox:
    """Annular sector about ``(c1, c2)`` between radii r1 < r2 and angles
    theta1 < theta2. With ``degenerate`` set the circle center is at
    infinity and the shape is ``limit_box``; circle fields are then NaN."""

    c1: float
    c2: float
    r1: float
    r2: float
    theta1: float
    theta2: float
    degenerate: bool = False
    limit_box: OrientedBox | None = None
    kind = "curved"

    def __post_init__(self):
        if self.degenerate:
            if self.limit_box is None:
                raise DataError("degenerate curved box needs its oriented-box limit")
            return
        if not (self.r1 < self.r2):
            raise DataError("curved box needs r1 < r2")
        span = self.theta2 - self.theta1
        if not (0 < span < 2 * math.pi):
            raise DataError("curved box needs 0 < theta2 - theta1 < 2 pi")
        # Given the two checks above, corners are distinct iff r1 > 0.
        if not self.r1 > 0:
            raise DataError("curved box corners are not distinct (r1 must be positive)")

    @classmethod
    def from_oriented(cls, box: OrientedBox) -> "CurvedBox":
        nan = float("nan")
        return cls(nan, nan, nan, nan, nan, nan, True, box)

    @property
    def circle_center(self) -> np.ndarray:
        return np.array([self.c1, self.c2])

    def corners(self) -> np.ndarray:
        if self.degenerate:
            return self.limit_box.corners()
        c = self.circle_center
        out = []
        for r, t in ((self.r1, self.theta1), (self.r2, self.theta1), (self.r2, self.theta2), (self.r1, self.theta2)):
            out.append(c + r * np.array([math.cos(t), math.sin(t)]))
        return np.array(out)

    def params(self) -> np.ndarray:
        if self.degenerate:
            return self.limit_box.params()
        return np.array([self.c1, self.c2, self.r1, self.r2, self.theta1, self.theta2])


@dataclass(frozen=True, eq=False)
class VertexPolygon:
    origin: np.ndarray  # object centroid
    vertices: np.ndarray  # relative to origin
    sampling_kind: str = "uniform_perimeter"
    kind = "polygon"

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(2)
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise DataError("vertex polygon needs at least 3 (x, y) vertices")
        if self.sampling_kind not in ("uniform_perimeter", "adaptive"):
            raise DataError(f"unknown sampling kind {self.sampling_kind!r}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "vertices", v)

    def __eq__(self, other):
        return (
            isinstance(other, VertexPolygon)
            and self.sampling_kind == other.sampling_kind
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.vertices, other.vertices)
        )

    @property
    def absolute(self) -> np.ndarray:
        return self.vertices + self.origin

    def params(self) -> np.ndarray:
        return self.vertices.ravel().copy()


def sector_width(n_sectors: int) -> float:
    return 2 * math.pi / n_sectors


def sector_index(angles, n_sectors: int) -> np.ndarray:
    """Sector i covers [i w - w/2, i w + w/2) with w = 2 pi / N, so the
    uniform-angular ray i * w sits at the center of sector i."""
    w = sector_width(n_sectors)
    a = np.mod(np.asarray(angles, dtype=float) + w / 2.0, 2 * math.pi)
    return np.minimum((a // w).astype(int), n_sectors - 1)


@dataclass(frozen=True, eq=False)
class PolarPolygon:
    center: np.ndarray
    radii: np.ndarray
    thetas: np.ndarray
    alphas: np.ndarray  # vertex count per sector
    kind = "polar"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        r = np.asarray(self.radii, dtype=float).ravel()
        t = np.asarray(self.thetas, dtype=float).ravel()
        a = np.asarray(self.alphas).ravel().astype(int)
        if not (len(r) == len(t) == len(a)) or len(r) < 1:
            raise DataError("polar polygon arrays must have equal, non-zero length")
        if np.any(r < 0) or np.any(a < 0):
            raise DataError("polar polygon radii and counts must be non-negative")
        active = a > 0
        if np.any(sector_index(t[active], len(r)) != np.flatnonzero(active)):
            raise DataError("polar polygon angle lies outside its sector")
        for name, val in (("center", c), ("radii", r), ("thetas", t), ("alphas", a)):
            object.__setattr__(self, name, val)

    def __eq__(self, other):
        return isinstance(other, PolarPolygon) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("center", "radii", "thetas", "alphas")
        )

    @property
    def n_sectors(self) -> int:
        return len(self.radii)

    def vertex_array(self) -> np.ndarray:
        keep = self.alphas > 0
        r, t = self.radii[keep], self.thetas[keep]
        return self.center + np.column_stack([r * np.cos(t), r * np.sin(t)])

    def params(self) -> np.ndarray:
        return np.concatenate([self.radii, self.thetas, self.alphas.astype(float)])


Shape = StandardBox | OrientedBox | EllipseShape | CurvedBox | VertexPolygon | PolarPolygon


# ---------------------------------------------------------------------------
# Operations


def shape_area(shape) -> float:
    if isinstance(shape, (StandardBox, OrientedBox)):
        return shape.width * shape.height
    if isinstance(shape, EllipseShape):
        return math.pi * (shape.width / 2) * (shape.height / 2)
    if isinstance(shape, CurvedBox):
        if shape.degenerate:
            return shape_area(shape.limit_box)
        return 0.5 * (shape.theta2 - shape.theta1) * (shape.r2 ** 2 - shape.r1 ** 2)
    if isinstance(shape, VertexPolygon):
        return polygon_area(shape.vertices)
    if isinstance(shape, PolarPolygon):
        v = shape.vertex_array()
        return polygon_area(v) if len(v) >= 3 else 0.0
    raise TypeError(f"not a shape: {type(shape).__name__}")


def _arc_steps(radius: float, span: float, tol: float) -> int:
    if radius <= tol:
        return max(1, int(math.ceil(span / (math.pi / 2))))
    step = 2.0 * math.acos(1.0 - tol / radius)
    return max(1, int(math.ceil(span / step)))


def _arc(center, radius, t0, t1, tol) -> np.ndarray:
    n = _arc_steps(radius, abs(t1 - t0), tol)
    t = np.linspace(t0, t1, n + 1)
    return np.asarray(center) + radius * np.column_stack([np.cos(t), np.sin(t)])


def ellipse_points(shape: EllipseShape, tol: float) -> np.ndarray:
    a, b = shape.width / 2.0, shape.height / 2.0
    # Chord deviation <= a dt^2 / 8 for parameter step dt.
    dt = math.sqrt(8.0 * tol / a)
    n = max(8, int(math.ceil(2 * math.pi / dt)))
    t = np.arange(n) * (2 * math.pi / n)
    phi = math.radians(shape.angle)
    u = np.array([math.cos(phi), math.sin(phi)])
    v = np.array([-math.sin(phi), math.cos(phi)])
    return shape.center + np.outer(a * np.cos(t), u) + np.outer(b * np.sin(t), v)


def shape_to_polygon(shape, arc_tolerance: float = DEFAULT_ARC_TOLERANCE) -> Contour:
    """Polygon within ``arc_tolerance`` (Hausdorff) of the shape boundary.

    Boxes come out as exact 4-gons; arc vertices lie on the true boundary.
    """
    if arc_tolerance <= 0:
        raise DataError("arc_tolerance must be positive")
    if isinstance(shape, (StandardBox, OrientedBox)):
        v = shape.corners()
    elif isinstance(shape, EllipseShape):
        v = ellipse_points(shape, arc_tolerance)
    elif isinstance(shape, CurvedBox):
        if shape.degenerate:
            v = shape.limit_box.corners()
        else:
            c = shape.circle_center
            outer = _arc(c, shape.r2, shape.theta1, shape.theta2, arc_tolerance)
            inner = _arc(c, shape.r1, shape.theta2, shape.theta1, arc_tolerance)
            v = np.vstack([outer, inner])
    elif isinstance(shape, VertexPolygon):
        v = shape.absolute
    elif isinstance(shape, PolarPolygon):
        v = shape.vertex_array()
    else:
        raise TypeError(f"not a shape: {type(shape).__name__}")
    return Contour(v, validate=False)


_POLY_KIND = re.compile(r"^(poly|polar|angular)(\d+)(-adaptive)?$")


def param_count(shape_kind: str) -> int:
    """Regression parameter count per representation kind.

    ``polyN`` (uniform or adaptive) stores N (x, y) pairs, ``polarN`` stores
    (r, theta, alpha) per sector, ``angularN`` a center plus N radii.
    """
    fixed = {"standard": 4, "oriented": 5, "ellipse": 5, "curved": 6}
    if shape_kind in fixed:
        return fixed[shape_kind]
    m = _POLY_KIND.match(shape_kind)
    if not m:
        raise DataError(f"unknown representation kind {shape_kind!r}")
    n = int(m.group(2))
    return {"poly": 2 * n, "polar": 3 * n, "angular": n + 2}[m.group(1)]


def footpoint(shape) -> np.ndarray:
    """Bottom-most boundary point (maximal image y); ties take the median x."""
    if isinstance(shape, EllipseShape):
        phi = math.radians(shape.angle)
        ha, hb = shape.width / 2.0, shape.height / 2.0
        a, b = ha * math.sin(phi), hb * math.cos(phi)
        t = math.atan2(b, a)
        x = shape.cx + ha * math.cos(t) * math.cos(phi) - hb * math.sin(t) * math.sin(phi)
        return np.array([x, shape.cy + math.hypot(a, b)])
    if isinstance(shape, CurvedBox) and not shape.degenerate:
        cands = [shape.corners()]
        down = math.pi / 2
        k = math.ceil((shape.theta1 - down) / (2 * math.pi))
        t = down + 2 * math.pi * k
        if shape.theta1 <= t <= shape.theta2:
            for r in (shape.r1, shape.r2):
                cands.append((shape.circle_center + r * np.array([math.cos(t), math.sin(t)]))[None, :])
        pts = np.vstack(cands)
    else:
        pts = shape_to_polygon(shape).vertices
    ymax = pts[:, 1].max()
    scale = max(1.0, float(np.abs(pts).max()))
    tied = pts[pts[:, 1] >= ymax - 1e-9 * scale]
    return np.array([float(np.median(tied[:, 0])), float(ymax)])


def curved_box_center(box: CurvedBox) -> np.ndarray:
    """Object center: mid-radius point on the mid-angle ray."""
    if box.degenerate:
        return box.limit_box.center
    tm = 0.5 * (box.theta1 + box.theta2)
    rm = 0.5 * (box.r1 + box.r2)
    return box.circle_center + rm * np.array([math.cos(tm), math.sin(tm)])


def curved_box_from_center(center, r1: float, r2: float, theta1: float, theta2: float) -> CurvedBox:
    tm = 0.5 * (theta1 + theta2)
    rm = 0.5 * (r1 + r2)
    c = np.asarray(center, dtype=float) - rm * np.array([math.cos(tm), math.sin(tm)])
    return CurvedBox(float(c[0]), float(c[1]), r1, r2, theta1, theta2)


# ---------------------------------------------------------------------------
# Serialization


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def _unnum(x):
    return float("nan") if x is None else float(x)


def shape_to_dict(shape) -> dict:
    if isinstance(shape, StandardBox):
        return {"kind": "standard", "center": [float(shape.cx), float(shape.cy)], "width": float(shape.width),
                "height": float(shape.height)}
    if isinstance(shape, OrientedBox):
        return {"kind": "oriented", "center": [float(shape.cx), float(shape.cy)], "width": float(shape.width),
                "height": float(shape.height), "angle": float(shape.angle)}
    if isinstance(shape, EllipseShape):
        return {"kind": "ellipse", "center": [float(shape.cx), float(shape.cy)], "width": float(shape.width),
                "height": float(shape.height), "angle": float(shape.angle)}
    if isinstance(shape, CurvedBox):
        return {
            "kind": "curved",
            "circle_center": [_num(shape.c1), _num(shape.c2)],
            "r1": _num(shape.r1),
            "r2": _num(shape.r2),
            "theta1": _num(shape.theta1),
            "theta2": _num(shape.theta2),
            "degenerate": shape.degenerate,
            "limit_box": shape_to_dict(shape.limit_box) if shape.limit_box is not None else None,
        }
    if isinstance(shape, VertexPolygon):
        return {
            "kind": "polygon",
            "origin": [float(v) for v in shape.origin],
            "vertices": [[float(x), float(y)] for x, y in shape.vertices],
            "sampling_kind": shape.sampling_kind,
        }
    if isinstance(shape, PolarPolygon):
        return {
            "kind": "polar",
            "center": [float(v) for v in shape.center],
            "radii": [float(v) for v in shape.radii],
            "thetas": [float(v) for v in shape.thetas],
            "alphas": [int(v) for v in shape.alphas],
            "n_sectors": shape.n_sectors,
        }
    raise TypeError(f"not a shape: {type(shape).__name__}")


def shape_from_dict(data: dict):
    try:
        kind = data["kind"]
        if kind == "standard":
            return StandardBox(*map(float, data["center"]), float(data["width"]), float(data["height"]))
        if kind == "oriented":
            return OrientedBox(*map(float, data["center"]), float(data["width"]), float(data["height"]), float(data["angle"]))
        if kind == "ellipse":
            return EllipseShape(*map(float, data["center"]), float(data["width"]), float(data["height"]), float(data["angle"]))
        if kind == "curved":
            limit = shape_from_dict(data["limit_box"]) if data.get("limit_box") else None
            return CurvedBox(
                *map(_unnum, data["circle_center"]),
                _unnum(data["r1"]), _unnum(data["r2"]), _unnum(data["theta1"]), _unnum(data["theta2"]),
                bool(data.get("degenerate", False)), limit,
            )
        if kind == "polygon":
            return VertexPolygon(data["origin"], data["vertices"], data.get("sampling_kind", "uniform_perimeter"))
        if kind == "polar":
            return PolarPolygon(data["center"], data["radii"], data["thetas"], data["alphas"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed shape record: {exc}") from None
    raise DataError(f"unknown shape kind {data.get('kind')!r}")


def is_convex_shape(shape) -> bool:
    return isinstance(shape, (StandardBox, OrientedBox, EllipseShape)) or (
        isinstance(shape, CurvedBox) and shape.degenerate
    )
