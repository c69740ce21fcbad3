"""Computational-geometry primitives.

Coordinates are image pixels with x to the right and y downward. "CCW"
throughout means positive shoelace area in that (x, y) frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import (
    BothEmpty,
    DegenerateInput,
    DimensionMismatch,
    InvalidContour,
    NonConvexInput,
    OutOfBounds,
)

# Khachiyan iteration controls.
MVEE_TOL = 1e-6
MVEE_MAX_ITER = 1000

REFERENCE_RASTER_SIZE = 512


# ---------------------------------------------------------------------------
# Basic polygon helpers


def as_points(points, min_points: int = 1) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInput(f"expected an (n, 2) point array, got shape {pts.shape}")
    if len(pts) < min_points:
        raise DegenerateInput(f"need at least {min_points} points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("points contain non-finite values")
    return pts


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(vertices) -> float:
    return abs(signed_area(np.asarray(vertices, dtype=float)))


def polygon_perimeter(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def polygon_centroid(vertices) -> np.ndarray:
    """Area centroid; falls back to the vertex mean for zero-area input."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        return v.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def points_in_polygon(points, vertices) -> np.ndarray:
    """Even-odd test for many points. Boundary points are unspecified."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px, py = p[:, 0:1], p[:, 1:2]
    straddle = (y0 <= py) != (y1 <= py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xc)
    return (hits.sum(axis=1) % 2) == 1


def _segments_intersect_any(v: np.ndarray) -> bool:
    """True if any two non-adjacent edges of the closed polygon touch."""
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    idx = np.arange(n)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        i = idx[start:start + chunk, None]
        j = idx[None, :]
        # Only consider j > i and non-adjacent edge pairs.
        valid = (j > i) & (j != i + 1) & ~((i == 0) & (j == n - 1))
        if not valid.any():
            continue
        p, r = a[start:start + chunk, None, :], (b - a)[start:start + chunk, None, :]
        q, s = a[None, :, :], (b - a)[None, :, :]

        def cross(u, w):
            return u[..., 0] * w[..., 1] - u[..., 1] * w[..., 0]

        d1 = cross(r, q - p)
        d2 = cross(r, q + s - p)
        d3 = cross(s, p - q)
        d4 = cross(s, p + r - q)
        proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)

        # Collinear touching cases.
        def on_seg(o, d, pt, c):
            lo = np.minimum(o, o + d)
            hi = np.maximum(o, o + d)
            inside = np.all((pt >= lo - 1e-12) & (pt <= hi + 1e-12), axis=-1)
            return (np.abs(c) < 1e-12) & inside

        touch = (
            on_seg(p, r, q, d1)
            | on_seg(p, r, q + s, d2)
            | on_seg(q, s, p, d3)
            | on_seg(q, s, p + r, d4)
        )
        if np.any((proper | touch) & valid):
            return True
    return False


def is_simple_polygon(vertices) -> bool:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return False
    return not _segments_intersect_any(v)


def is_convex(vertices, tol: float = 1e-9) -> bool:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return False
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cr = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    scale = max(np.abs(v).max(), 1.0) ** 2
    return bool(np.all(cr >= -tol * scale) or np.all(cr <= tol * scale))


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed, simple polygon with CCW vertex order.

    Construction validates and normalizes. Internal callers that already
    hold a valid loop pass ``validate=False`` to skip the O(n^2) simplicity
    check.
    """

    vertices: np.ndarray
    closed: bool = True
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidContour(f"contour must be (n, 2), got {v.shape}")
        if len(v) < 3:
            raise InvalidContour(f"contour needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise InvalidContour("contour has non-finite coordinates")
        if self.validate:
            if _segments_intersect_any(v):
                raise InvalidContour("contour is self-intersecting")
        if signed_area(v) < 0:
            v = v[::-1].copy()
            # Keep vertex 0 first after reversing.
            v = np.roll(v, 1, axis=0)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def perimeter(self) -> float:
        return polygon_perimeter(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


@dataclass(frozen=True)
class GridSpec2D:
    """Pixel lattice used for rasterization.

    ``origin`` is the contour-space position of the grid's top-left corner;
    pixel (row i, col j) has its center at
    ``origin + ((j + 0.5) / resolution, (i + 0.5) / resolution)``.
    """

    width: int
    height: int
    resolution: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise DegenerateInput("grid resolution must be positive")
        if self.width <= 0 or self.height <= 0:
            raise DegenerateInput("grid dimensions must be positive")

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) / self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) / self.resolution
        return xs, ys

    @classmethod
    def fitting(cls, bounds, size: int = REFERENCE_RASTER_SIZE) -> "GridSpec2D":
        """Grid whose longest side spans ``bounds`` with ``size`` pixels."""
        x0, y0, x1, y1 = bounds
        span = max(x1 - x0, y1 - y0)
        if span <= 0:
            raise DegenerateInput("cannot fit a grid to zero-extent bounds")
        res = (size - 2) / span
        w = int(np.ceil((x1 - x0) * res)) + 2
        h = int(np.ceil((y1 - y0) * res)) + 2
        return cls(w, h, res, (x0 - 1.0 / res, y0 - 1.0 / res))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray
    grid: GridSpec2D | None = None

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2 or b.shape[0] == 0 or b.shape[1] == 0:
            raise DegenerateInput(f"mask must be a non-empty 2D grid, got {b.shape}")
        grid = self.grid or GridSpec2D(b.shape[1], b.shape[0])
        if (grid.height, grid.width) != b.shape:
            raise DimensionMismatch("mask bits do not match grid dimensions")
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "grid", grid)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @cached_property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @cached_property
    def foreground_bounds(self):
        """(r0, r1, c0, c1) half-open bounds of the foreground, or None."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        if not len(rows):
            return None
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1

    def to_pgm(self) -> bytes:
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + (self.bits.astype(np.uint8) * 255).tobytes()

    @classmethod
    def from_pgm(cls, data: bytes) -> "BinaryMask":
        parts = data.split(maxsplit=4)
        if parts[0] != b"P5":
            raise DegenerateInput("only binary PGM (P5) is supported")
        w, h = int(parts[1]), int(parts[2])
        pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
        return cls(pix > 127)


# ---------------------------------------------------------------------------
# Hulls and enclosing shapes


def convex_hull(points) -> Contour:
    """Andrew's monotone chain. Collinear boundary points are dropped."""
    pts = as_points(points, 3)
    uniq = np.unique(pts, axis=0)  # sorted lexicographically by x then y
    if len(uniq) < 3:
        raise DegenerateInput("convex hull needs at least 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in uniq[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3 or abs(signed_area(hull)) <= 1e-12 * max(1.0, np.ptp(uniq, axis=0).max()) ** 2:
        raise DegenerateInput("points are collinear")
    return Contour(hull, validate=False)


class RotatedRect(NamedTuple):
    center: np.ndarray
    width: float
    height: float
    angle: float  # degrees, width measured along this direction

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> np.ndarray:
        t = np.deg2rad(self.angle)
        u = np.array([np.cos(t), np.sin(t)])
        v = np.array([-np.sin(t), np.cos(t)])
        hw, hh = self.width / 2.0, self.height / 2.0
        c = np.asarray(self.center, dtype=float)
        return np.array([c - hw * u - hh * v, c + hw * u - hh * v, c + hw * u + hh * v, c - hw * u + hh * v])


def wrap_angle_deg(angle: float, period: float = 180.0) -> float:
    """Map an angle into [-period/2, period/2)."""
    half = period / 2.0
    a = (angle + half) % period - half
    if a >= half:  # float rounding at the upper edge
        a -= period
    return float(a)


def canonical_rect(center, width: float, height: float, angle: float) -> RotatedRect:
    """Pick the representative of (w, h, a) ~ (h, w, a + 90) with the
    smallest |angle|; exact ties resolve to the positive angle."""
    a1 = wrap_angle_deg(angle)
    a2 = wrap_angle_deg(angle + 90.0)
    cands = [(a1, width, height), (a2, height, width)]
    cands.sort(key=lambda c: (round(abs(c[0]), 9), -np.sign(c[0])))
    a, w, h = cands[0]
    if abs(a) < 1e-9:
        a = 0.0
    return RotatedRect(np.asarray(center, dtype=float), float(w), float(h), a)


def axis_aligned_rect(points) -> RotatedRect:
    pts = as_points(points, 1)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return RotatedRect((lo + hi) / 2.0, float(hi[0] - lo[0]), float(hi[1] - lo[1]), 0.0)


def min_area_rect(contour) -> RotatedRect:
    """Minimum-area enclosing rectangle by rotating calipers.

    One side of the optimum is flush with a hull edge, so only hull edge
    directions are tried.
    """
    pts = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    hull = convex_hull(pts).vertices
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.linalg.norm(edges, axis=1)
    keep = lengths > 0
    dirs = edges[keep] / lengths[keep, None]
    # Project hull onto each edge frame: (k, n)
    u = hull @ dirs.T
    v = hull @ np.stack([-dirs[:, 1], dirs[:, 0]], axis=1).T
    umin, umax = u.min(axis=0), u.max(axis=0)
    vmin, vmax = v.min(axis=0), v.max(axis=0)
    areas = (umax - umin) * (vmax - vmin)
    best = areas.min()
    tie = np.flatnonzero(areas <= best * (1 + 1e-9) + 1e-12)
    rects = []
    for k in tie:
        d = dirs[k]
        n = np.array([-d[1], d[0]])
        cu, cv = (umin[k] + umax[k]) / 2.0, (vmin[k] + vmax[k]) / 2.0
        center = cu * d + cv * n
        ang = np.rad2deg(np.arctan2(d[1], d[0]))
        rects.append(canonical_rect(center, umax[k] - umin[k], vmax[k] - vmin[k], ang))
    rects.sort(key=lambda r: (round(abs(r.angle), 9), -np.sign(r.angle), round(r.width, 9)))
    return rects[0]


class EllipseFit(NamedTuple):
    center: np.ndarray
    a: float  # semi-major
    b: float  # semi-minor
    angle: float  # degrees, major-axis direction in [-90, 90)

    @property
    def area(self) -> float:
        return float(np.pi * self.a * self.b)


def _khachiyan(points: np.ndarray, tol: float, max_iter: int):
    n, d = points.shape
    q = np.vstack([points.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x = (q * u) @ q.T
        m = np.einsum("ij,ji->i", q.T, np.linalg.solve(x, q))
        j = int(np.argmax(m))
        step = (m[j] - d - 1.0) / ((d + 1.0) * (m[j] - 1.0))
        new_u = (1.0 - step) * u
        new_u[j] += step
        err = np.linalg.norm(new_u - u)
        u = new_u
        if err < tol:
            break
    c = points.T @ u
    cov = (points.T * u) @ points - np.outer(c, c)
    shape = np.linalg.inv(cov) / d
    return c, shape


def min_enclosing_ellipse(contour, tol: float = MVEE_TOL, max_iter: int = MVEE_MAX_ITER) -> EllipseFit:
    """Minimum-area enclosing ellipse via Khachiyan's algorithm on the hull.

    The solver's output is rescaled so every point is enclosed exactly.
    """
    pts = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    hull = convex_hull(pts).vertices
    # Center and scale for conditioning.
    mu = hull.mean(axis=0)
    scale = np.abs(hull - mu).max()
    h = (hull - mu) / scale
    c, shape = _khachiyan(h, tol, max_iter)
    diff = h - c
    m = np.einsum("ij,jk,ik->i", diff, shape, diff).max()
    shape = shape / m
    evals, evecs = np.linalg.eigh(shape)
    a = scale / np.sqrt(evals[0])
    b = scale / np.sqrt(evals[1])
    major = evecs[:, 0]
    angle = np.rad2deg(np.arctan2(major[1], major[0]))
    angle = 0.0 if abs(a - b) <= 1e-9 * a else wrap_angle_deg(angle)
    return EllipseFit(mu + c * scale, float(a), float(b), float(angle))


# ---------------------------------------------------------------------------
# Circles and curvature


@dataclass(frozen=True, eq=False)
class CircleFit:
    center: np.ndarray | None
    radius: float
    residuals: np.ndarray
    is_line: bool = False
    line_point: np.ndarray | None = None
    line_direction: np.ndarray | None = None

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if len(self.residuals) else 0.0


def _line_fit(pts: np.ndarray):
    mu = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mu)
    d = vt[0]
    nrm = np.array([-d[1], d[0]])
    return mu, d, np.abs((pts - mu) @ nrm)


def fit_circle_kasa(points) -> CircleFit:
    """Algebraic least-squares circle.

    Falls back to a straight line (``is_line``) when the points are
    collinear or a line explains them at least as well as the circle.
    """
    pts = as_points(points, 3)
    mu = pts.mean(axis=0)
    scale = np.abs(pts - mu).max()
    if scale == 0:
        raise DegenerateInput("all points coincide")
    p = (pts - mu) / scale
    lp, ld, line_res = _line_fit(pts)
    line = CircleFit(None, float("inf"), line_res, True, lp, ld)

    a = np.column_stack([p, np.ones(len(p))])
    rhs = -(p ** 2).sum(axis=1)
    sol, _, rank, sv = np.linalg.lstsq(a, rhs, rcond=None)
    if rank < 3 or sv[-1] <= 1e-12 * sv[0]:
        return line
    cx, cy = -sol[0] / 2.0, -sol[1] / 2.0
    r2 = cx * cx + cy * cy - sol[2]
    if r2 <= 0 or np.sqrt(r2) > 1e7:
        return line
    center = mu + scale * np.array([cx, cy])
    radius = scale * float(np.sqrt(r2))
    res = np.abs(np.linalg.norm(pts - center, axis=1) - radius)
    if line_res.max() <= res.max():
        return line
    return CircleFit(center, radius, res)


def local_curvature(contour, index: int, k: int = 3) -> float:
    """Curvature of the circle through vertices index-k, index, index+k."""
    v = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    n = len(v)
    a, b, c = v[(index - k) % n], v[index % n], v[(index + k) % n]
    ab, bc, ca = np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c)
    area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    denom = ab * bc * ca
    if denom <= 1e-15 or area2 <= 1e-12 * denom ** (2.0 / 3.0):
        return 0.0
    return float(2.0 * area2 / denom)


def resample_arclength(contour, n: int) -> Contour:
    """N points at equal arc-length spacing starting at vertex 0."""
    if n < 3:
        raise DegenerateInput("resampling needs N >= 3")
    v = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    loop = np.vstack([v, v[:1]])
    seg = np.linalg.norm(np.diff(loop, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise DegenerateInput("contour has zero perimeter")
    s = np.arange(n) * (total / n)
    out = np.column_stack([np.interp(s, cum, loop[:, 0]), np.interp(s, cum, loop[:, 1])])
    return Contour(out, validate=False)


# ---------------------------------------------------------------------------
# Rasterization and IoU


def rasterize_polygon(contour, grid: GridSpec2D, check_bounds: bool = True) -> BinaryMask:
    """Pixel-center, even-odd scanline fill.

    A pixel is foreground iff its center lies inside the polygon. Crossings
    use half-open row spans so shared vertices are counted once.
    """
    v = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    res = grid.resolution
    # Lattice coordinates: pixel (i, j) has its center at (u=j, w=i).
    u = (v[:, 0] - grid.origin[0]) * res - 0.5
    w = (v[:, 1] - grid.origin[1]) * res - 0.5
    if check_bounds:
        if u.min() < -0.5 - 1e-9 or w.min() < -0.5 - 1e-9 or u.max() > grid.width - 0.5 + 1e-9 or w.max() > grid.height - 0.5 + 1e-9:
            raise OutOfBounds("contour extends beyond the grid")
    bits = np.zeros((grid.height, grid.width), dtype=bool)
    u0, w0 = u, w
    u1, w1 = np.roll(u, -1), np.roll(w, -1)
    lo, hi = np.minimum(w0, w1), np.maximum(w0, w1)
    r0 = np.ceil(lo).astype(np.int64)
    r1 = np.ceil(hi).astype(np.int64)  # rows r with lo <= r < hi
    r0 = np.clip(r0, 0, grid.height)
    r1 = np.clip(r1, 0, grid.height)
    counts = np.maximum(r1 - r0, 0)
    total = int(counts.sum())
    if total == 0:
        return BinaryMask(bits, grid)
    edge = np.repeat(np.arange(len(u0)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    rows = r0[edge] + offs
    t = (rows - w0[edge]) / (w1[edge] - w0[edge])
    xs = u0[edge] + t * (u1[edge] - u0[edge])
    order = np.lexsort((xs, rows))
    rows, xs = rows[order], xs[order]
    if len(rows) % 2:
        raise InvalidContour("odd number of scanline crossings")
    ra, xa, xb = rows[0::2], xs[0::2], xs[1::2]
    ja = np.clip(np.ceil(xa).astype(np.int64), 0, grid.width)
    jb = np.clip(np.ceil(xb).astype(np.int64), 0, grid.width)
    stride = grid.width + 1
    size = grid.height * stride
    diff = np.bincount(ra * stride + ja, minlength=size) - np.bincount(ra * stride + jb, minlength=size)
    bits = np.cumsum(diff.reshape(grid.height, stride), axis=1)[:, :-1] > 0
    return BinaryMask(bits, grid)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    inter = np.count_nonzero(a.bits & b.bits)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        raise BothEmpty("IoU of two empty masks is undefined")
    return inter / union


def _window_for(mask: BinaryMask, vertices: np.ndarray):
    """Smallest grid on the mask's lattice covering both the polygon and the
    mask foreground."""
    g = mask.grid
    res = g.resolution
    cols = (vertices[:, 0] - g.origin[0]) * res
    rows = (vertices[:, 1] - g.origin[1]) * res
    c0, c1 = int(np.floor(cols.min())) - 1, int(np.ceil(cols.max())) + 1
    r0, r1 = int(np.floor(rows.min())) - 1, int(np.ceil(rows.max())) + 1
    fb = mask.foreground_bounds
    if fb is not None:
        r0, r1 = min(r0, fb[0]), max(r1, fb[1])
        c0, c1 = min(c0, fb[2]), max(c1, fb[3])
    return r0, r1, c0, c1


def polygon_mask_iou(contour, mask: BinaryMask) -> float:
    """IoU between a polygon and a mask on the mask's own pixel lattice.

    The polygon is not clipped to the mask extent: the comparison window
    grows to cover both, so shapes poking out of the image are penalized.
    """
    v = contour.vertices if isinstance(contour, Contour) else as_points(contour, 3)
    g = mask.grid
    r0, r1, c0, c1 = _window_for(mask, v)
    win = GridSpec2D(c1 - c0, r1 - r0, g.resolution, (g.origin[0] + c0 / g.resolution, g.origin[1] + r0 / g.resolution))
    poly = rasterize_polygon(v, win, check_bounds=False).bits
    # The window covers all mask foreground, so the union follows from counts.
    sr0, sr1 = max(r0, 0), min(r1, mask.height)
    sc0, sc1 = max(c0, 0), min(c1, mask.width)
    inter = 0
    if sr1 > sr0 and sc1 > sc0:
        inter = np.count_nonzero(poly[sr0 - r0:sr1 - r0, sc0 - c0:sc1 - c0] & mask.bits[sr0:sr1, sc0:sc1])
    union = np.count_nonzero(poly) + mask.count - inter
    if union == 0:
        raise BothEmpty("IoU of two empty regions is undefined")
    return inter / union


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: part of ``subject`` inside CCW convex ``clip``."""
    out = subject
    for i in range(len(clip)):
        if len(out) == 0:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        ex, ey = b - a
        side = ex * (out[:, 1] - a[1]) - ey * (out[:, 0] - a[0])
        inside = side >= 0
        nxt = np.roll(out, -1, axis=0)
        side_n = np.roll(side, -1)
        res = []
        for k in range(len(out)):
            if inside[k]:
                res.append(out[k])
            if inside[k] != (side_n[k] >= 0):
                t = side[k] / (side[k] - side_n[k])
                res.append(out[k] + t * (nxt[k] - out[k]))
        out = np.array(res) if res else np.zeros((0, 2))
    return out


def convex_polygon_intersection_area(a, b) -> float:
    va = a.vertices if isinstance(a, Contour) else np.asarray(a, dtype=float)
    vb = b.vertices if isinstance(b, Contour) else np.asarray(b, dtype=float)
    if signed_area(va) < 0:
        va = va[::-1]
    if signed_area(vb) < 0:
        vb = vb[::-1]
    inter = _clip_convex(va, vb)
    return polygon_area(inter) if len(inter) >= 3 else 0.0


def convex_clip_iou(a, b) -> float:
    """Exact IoU of two convex polygons by clipping."""
    va = a.vertices if isinstance(a, Contour) else as_points(a, 3)
    vb = b.vertices if isinstance(b, Contour) else as_points(b, 3)
    if not is_convex(va) or not is_convex(vb):
        raise NonConvexInput("convex_clip_iou needs convex polygons")
    inter = convex_polygon_intersection_area(va, vb)
    union = polygon_area(va) + polygon_area(vb) - inter
    if union <= 0:
        raise BothEmpty("IoU of two zero-area polygons is undefined")
    return inter / union


def raster_iou(a, b, size: int = REFERENCE_RASTER_SIZE) -> float:
    """Mask IoU of two polygons on a shared grid ``size`` pixels across."""
    va = a.vertices if isinstance(a, Contour) else as_points(a, 3)
    vb = b.vertices if isinstance(b, Contour) else as_points(b, 3)
    allv = np.vstack([va, vb])
    grid = GridSpec2D.fitting((*allv.min(axis=0), *allv.max(axis=0)), size)
    return mask_iou(rasterize_polygon(va, grid), rasterize_polygon(vb, grid))
