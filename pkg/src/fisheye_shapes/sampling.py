"""Polygon vertex samplers: uniform angular, uniform perimeter and
curvature-adaptive."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CentroidOutside, DataError, DegenerateInput
from .geometry import Contour, points_in_polygon, polygon_centroid, resample_arclength
from .shapes import PolarPolygon, VertexPolygon, sector_index, sector_width


@dataclass(frozen=True)
class AdaptiveSamplingConfig:
    target_vertices: int = 24
    min_support: int = 3
    max_support: int = 15
    epsilon_tol: float = 1e-3  # pixels; stop bisecting below this bracket
    max_spacing: float = 1.0  # densification step, pixels
    refine_sweeps: int = 8

    def __post_init__(self):
        if self.target_vertices < 4:
            raise DataError("adaptive sampling needs at least 4 target vertices")
        if not 1 <= self.min_support <= self.max_support:
            raise DataError("need 1 <= min_support <= max_support")


def _vertices(contour) -> np.ndarray:
    if isinstance(contour, Contour):
        return contour.vertices
    return Contour(contour).vertices


def sector_centers(n: int) -> np.ndarray:
    return np.arange(n) * sector_width(n)


# ---------------------------------------------------------------------------
# Uniform samplers


def ray_polygon_hits(origin, angles, vertices) -> np.ndarray:
    """Farthest boundary intersection distance along each ray (NaN if none)."""
    o = np.asarray(origin, dtype=float)
    d = np.column_stack([np.cos(angles), np.sin(angles)])  # (R, 2)
    a = vertices - o
    e = np.roll(vertices, -1, axis=0) - vertices  # (E, 2)
    # Solve t d = a + s e  ->  cross products.
    den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    t_num = a[None, :, 0] * e[None, :, 1] - a[None, :, 1] * e[None, :, 0]
    s_num = a[None, :, 0] * d[:, None, 1] - a[None, :, 1] * d[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / den
        s = s_num / den
    # Small slack on s so a ray through a vertex cannot slip between edges.
    ok = (np.abs(den) > 1e-15) & (s >= -1e-9) & (s <= 1 + 1e-9) & (t > 0)
    t = np.where(ok, t, -np.inf)
    best = t.max(axis=1)
    return np.where(np.isfinite(best), best, np.nan)


def sample_uniform_angular(contour, n: int) -> PolarPolygon:
    """Rays from the centroid at i * 2 pi / N; farthest boundary hit per ray."""
    if n < 3:
        raise DegenerateInput("angular sampling needs N >= 3")
    v = _vertices(contour)
    c = polygon_centroid(v)
    if not points_in_polygon(c[None, :], v)[0]:
        raise CentroidOutside("contour centroid lies outside the contour")
    theta = sector_centers(n)
    r = ray_polygon_hits(c, theta, v)
    if np.any(np.isnan(r)):
        raise CentroidOutside("a ray from the centroid misses the contour")
    return PolarPolygon(c, r, theta, np.ones(n, dtype=int))


def sample_uniform_perimeter(contour, n: int) -> VertexPolygon:
    """N vertices at equal arc length from vertex 0, stored centroid-relative."""
    v = _vertices(contour)
    c = polygon_centroid(v)
    pts = resample_arclength(Contour(v, validate=False), n).vertices
    return VertexPolygon(c, pts - c, "uniform_perimeter")


def sector_vertex_counts(poly: VertexPolygon, n_sectors: int) -> np.ndarray:
    if n_sectors < 1:
        raise DataError("need at least one sector")
    ang = np.arctan2(poly.vertices[:, 1], poly.vertices[:, 0])
    return np.bincount(sector_index(ang, n_sectors), minlength=n_sectors)


def to_polar(poly: VertexPolygon, n_sectors: int) -> PolarPolygon:
    """Polar encoding: per sector the vertex count and the first vertex's
    (r, theta). Empty sectors carry r=0 at the sector center."""
    rel = poly.vertices
    ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2 * math.pi)
    idx = sector_index(ang, n_sectors)
    r = np.zeros(n_sectors)
    t = sector_centers(n_sectors).copy()
    alpha = np.bincount(idx, minlength=n_sectors)
    for k in range(len(rel) - 1, -1, -1):  # reverse so the first vertex wins
        r[idx[k]] = np.hypot(*rel[k])
        a = ang[k]
        # Sector 0 straddles 0; use the representation inside it.
        if idx[k] == 0 and a >= math.pi:
            a -= 2 * math.pi
        t[idx[k]] = a
    return PolarPolygon(poly.origin, r, t, alpha)


# ---------------------------------------------------------------------------
# Curvature-adaptive sampling


def densify(vertices: np.ndarray, max_spacing: float) -> np.ndarray:
    """Insert points so no edge is longer than ``max_spacing``; originals kept."""
    nxt = np.roll(vertices, -1, axis=0)
    seg = np.linalg.norm(nxt - vertices, axis=1)
    parts = np.maximum(1, np.ceil(seg / max_spacing).astype(int))
    rep = np.repeat(np.arange(len(vertices)), parts)
    frac = (np.arange(parts.sum()) - np.repeat(np.cumsum(parts) - parts, parts)) / parts[rep]
    return vertices[rep] + frac[:, None] * (nxt[rep] - vertices[rep])


def region_of_support(pts: np.ndarray, kmin: int, kmax: int) -> np.ndarray:
    """Teh-Chin region of support half-width per point, clipped to [kmin, kmax]."""
    n = len(pts)
    kmax = max(kmin, min(kmax, (n - 1) // 2))
    ks = np.arange(1, kmax + 2)
    idx = np.arange(n)
    prev = pts[(idx[:, None] - ks[None, :]) % n]
    nxt = pts[(idx[:, None] + ks[None, :]) % n]
    chord = nxt - prev
    length = np.linalg.norm(chord, axis=-1)
    rel = pts[:, None, :] - prev
    d = (chord[..., 0] * rel[..., 1] - chord[..., 1] * rel[..., 0]) / np.maximum(length, 1e-12)
    ratio = d / np.maximum(length, 1e-12)
    # Stop at the first k where the chord stops growing or d/l stops growing in magnitude.
    stop_len = length[:, :-1] >= length[:, 1:]
    stop_ratio = np.where(d[:, :-1] >= 0, ratio[:, :-1] >= ratio[:, 1:], ratio[:, :-1] <= ratio[:, 1:])
    stop = stop_len | stop_ratio
    first = np.where(stop.any(axis=1), stop.argmax(axis=1), kmax - 1)
    return np.clip(ks[first], kmin, kmax)


def dominant_points(pts: np.ndarray, kmin: int = 3, kmax: int = 15) -> np.ndarray:
    """Indices of Teh-Chin dominant points (k-cosine with non-maximum
    suppression over each point's region of support)."""
    n = len(pts)
    k = region_of_support(pts, kmin, kmax)
    idx = np.arange(n)
    a = pts[(idx - k) % n] - pts
    b = pts[(idx + k) % n] - pts
    cos = np.einsum("ij,ij->i", a, b) / np.maximum(np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-12)
    sig = 1.0 + cos  # 0 on straight runs
    keep = []
    for i in range(n):
        if sig[i] <= 1e-6:
            continue
        h = max(1, int(k[i]) // 2)
        nb = (i + np.arange(-h, h + 1)) % n
        m = sig[nb].max()
        if sig[i] < m:
            continue
        # Ties: keep the first index of a plateau.
        if np.any((sig[nb] == m) & (((nb - i) % n) > n // 2)):
            continue
        keep.append(i)
    return np.array(keep, dtype=int)


def _dp_closed(pts: np.ndarray, cand: np.ndarray, eps: float) -> np.ndarray:
    """Douglas-Peucker on the closed polyline through ``pts[cand]``.

    Returns the kept subset of ``cand`` (sorted).
    """
    m = len(cand)
    if m <= 3:
        return cand
    p = pts[cand]
    c = p.mean(axis=0)
    i0 = int(np.argmax(np.linalg.norm(p - c, axis=1)))
    i1 = int(np.argmax(np.linalg.norm(p - p[i0], axis=1)))
    keep = {i0, i1}
    stack = [(i0, i1), (i1, i0)]
    while stack:
        s, e = stack.pop()
        span = (e - s) % m
        if span < 2:
            continue
        inner = (s + np.arange(1, span)) % m
        a, b = p[s], p[e]
        ab = b - a
        nrm = np.linalg.norm(ab)
        rel = p[inner] - a
        if nrm < 1e-12:
            dist = np.linalg.norm(rel, axis=1)
        else:
            dist = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / nrm
        j = int(np.argmax(dist))
        if dist[j] > eps:
            mid = int(inner[j])
            keep.add(mid)
            stack.append((s, mid))
            stack.append((mid, e))
    return np.sort(cand[sorted(keep)])


def _arc_chord_errors(pts: np.ndarray, sel: np.ndarray):
    """Per selected segment: max distance of the contour arc to its chord."""
    n = len(pts)
    out = np.zeros(len(sel))
    for j in range(len(sel)):
        s, e = sel[j], sel[(j + 1) % len(sel)]
        span = (e - s) % n or n
        arc = pts[(s + np.arange(span + 1)) % n]
        ab = arc[-1] - arc[0]
        nrm = np.linalg.norm(ab)
        rel = arc - arc[0]
        d = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / nrm if nrm > 1e-12 else np.linalg.norm(rel, axis=1)
        out[j] = d.max()
    return out


def _pad(pts: np.ndarray, sel: np.ndarray, cum: np.ndarray, total: float, n_target: int) -> np.ndarray:
    """Insert arc-length midpoints on the worst-chord segments until N."""
    sel = list(sel)
    n = len(pts)
    while len(sel) < n_target:
        arr = np.array(sel)
        err = _arc_chord_errors(pts, arr)
        j = int(np.argmax(err))
        s, e = arr[j], arr[(j + 1) % len(arr)]
        span = (e - s) % n or n
        if span < 2:
            # No interior point left on the worst segment; take the longest instead.
            spans = (np.roll(arr, -1) - arr) % n
            j = int(np.argmax(spans))
            s, e = arr[j], arr[(j + 1) % len(arr)]
            span = (e - s) % n or n
            if span < 2:
                raise DegenerateInput("contour has too few points to pad")
        inner = (s + np.arange(1, span)) % n
        target = cum[s] + 0.5 * ((cum[e] - cum[s]) % total if e != s else total)
        arcpos = (cum[inner] - cum[s]) % total
        mid = int(inner[np.argmin(np.abs(arcpos - (target - cum[s])))])
        sel.insert(j + 1, mid)
        sel = sorted(sel)
    return np.array(sel, dtype=int)


def _split_costs(pts: np.ndarray, ds: np.ndarray, a: int, b: int) -> np.ndarray:
    """For every contour point c strictly between a and b, the approximate
    area between the arc and the two chords a-c and c-b."""
    n = len(pts)
    span = (b - a) % n
    idx = (a + np.arange(span + 1)) % n
    p = pts[idx]
    w = ds[idx]
    cand = np.arange(1, span)
    k = np.arange(span + 1)
    # chord a -> c
    ac = p[cand] - p[0]
    rel_a = p - p[0]
    cr1 = np.abs(ac[:, None, 0] * rel_a[None, :, 1] - ac[:, None, 1] * rel_a[None, :, 0])
    d1 = cr1 / np.maximum(np.linalg.norm(ac, axis=1), 1e-12)[:, None]
    m1 = (k[None, :] > 0) & (k[None, :] < cand[:, None])
    # chord c -> b
    cb = p[-1] - p[cand]
    rel_c = p[None, :, :] - p[cand][:, None, :]
    cr2 = np.abs(cb[:, None, 0] * rel_c[..., 1] - cb[:, None, 1] * rel_c[..., 0])
    d2 = cr2 / np.maximum(np.linalg.norm(cb, axis=1), 1e-12)[:, None]
    m2 = (k[None, :] > cand[:, None]) & (k[None, :] < span)
    return ((d1 * m1 + d2 * m2) * w[None, :]).sum(axis=1)


def _refine(pts: np.ndarray, sel: np.ndarray, sweeps: int) -> np.ndarray:
    """Slide each vertex along the contour between its neighbours to the
    position minimizing the arc-vs-chord area of its two edges."""
    n = len(pts)
    ds = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    sel = sel.copy()
    m = len(sel)
    for _ in range(sweeps):
        moved = False
        for j in range(m):
            a, b = int(sel[(j - 1) % m]), int(sel[(j + 1) % m])
            span = (b - a) % n
            if span < 2:
                continue
            cost = _split_costs(pts, ds, a, b)
            cur = (int(sel[j]) - a) % n - 1
            best = int(np.argmin(cost))
            if cost[best] < cost[cur] - 1e-9:
                sel[j] = (a + best + 1) % n
                moved = True
        if not moved:
            break
    return np.sort(sel)


def sample_adaptive(contour, cfg: AdaptiveSamplingConfig | None = None) -> VertexPolygon:
    """Curvature-adaptive polygon with exactly ``cfg.target_vertices`` vertices.

    Dominant points are found on the densified contour, then thinned by
    Douglas-Peucker with a bisected epsilon so the count lands at or just
    below N, then padded to N at arc-length midpoints of the worst-fitting
    segments, then locally refined.
    """
    cfg = cfg or AdaptiveSamplingConfig()
    n_target = cfg.target_vertices
    v = _vertices(contour)
    c = polygon_centroid(v)
    pts = densify(v, cfg.max_spacing)
    if len(pts) < n_target:
        raise DegenerateInput(f"contour has {len(pts)} points after densification, need {n_target}")
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    total = float(seg.sum())

    dom = dominant_points(pts, cfg.min_support, cfg.max_support)
    if len(dom) < 3:
        dom = np.unique(np.round(np.linspace(0, len(pts), 4, endpoint=False)).astype(int))
    if len(dom) > n_target:
        lo, hi = 0.0, float(np.ptp(pts, axis=0).max())
        best = _dp_closed(pts, dom, hi)
        while hi - lo > cfg.epsilon_tol:
            mid = 0.5 * (lo + hi)
            kept = _dp_closed(pts, dom, mid)
            if len(kept) > n_target:
                lo = mid
            else:
                hi = mid
                if len(kept) >= len(best):
                    best = kept
                if len(kept) == n_target:
                    break
        sel = best
    else:
        sel = np.sort(dom)
    if len(sel) < n_target:
        sel = _pad(pts, sel, cum, total, n_target)
    if cfg.refine_sweeps:
        sel = _refine(pts, sel, cfg.refine_sweeps)
    out = pts[sel]
    return VertexPolygon(c, out - c, "adaptive")
