"""Fisheye projection models and division-model fitting.

Camera frame: x right, y down, z along the optical axis. Image points are
``principal_point + r(theta) * (x, y) / |(x, y)|``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DataError,
    DegenerateInput,
    DegeneratePoint,
    FieldAngleExceeded,
    FitDiverged,
    Unrepresentable,
)
from .geometry import fit_circle_kasa

CAMERA_IDS = ("front", "rear", "left", "right")
DEFAULT_FOV = math.radians(190.0)
N_FIT_SAMPLES = 256

_MONOTONE_GRID = 2048


def _as_principal(pp) -> np.ndarray:
    p = np.asarray(pp, dtype=float).reshape(2)
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class PolynomialFisheyeModel:
    """r(theta) = a1 theta + a2 theta^2 + a3 theta^3 + a4 theta^4 (pixels)."""

    coeffs: tuple[float, float, float, float]
    principal_point: np.ndarray
    image_size: tuple[int, int] = (1280, 966)
    max_field_angle: float = DEFAULT_FOV / 2.0

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs)
        if len(c) != 4:
            raise DataError("polynomial model needs exactly four coefficients")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "principal_point", _as_principal(self.principal_point))
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))
        if not 0 < self.max_field_angle < math.pi:
            raise DataError("max_field_angle must lie in (0, pi)")
        th = np.linspace(0.0, self.max_field_angle, _MONOTONE_GRID)
        if np.any(self.radius_derivative(th) <= 0):
            raise DataError("polynomial radius is not strictly increasing on [0, max_field_angle]")

    def radius(self, theta):
        a1, a2, a3, a4 = self.coeffs
        t = np.asarray(theta, dtype=float)
        return t * (a1 + t * (a2 + t * (a3 + t * a4)))

    def radius_derivative(self, theta):
        a1, a2, a3, a4 = self.coeffs
        t = np.asarray(theta, dtype=float)
        return a1 + t * (2 * a2 + t * (3 * a3 + t * 4 * a4))

    def field_angle(self, radius):
        """Inverse of ``radius`` by table lookup plus Newton polish."""
        r = np.asarray(radius, dtype=float)
        th_tab = np.linspace(0.0, self.max_field_angle, _MONOTONE_GRID)
        th = np.interp(r, self.radius(th_tab), th_tab)
        for _ in range(4):
            th = th - (self.radius(th) - r) / self.radius_derivative(th)
        return th

    def scaled(self, factor: float) -> "PolynomialFisheyeModel":
        """Same lens on an image resampled by ``factor`` (0.25 = 4x smaller)."""
        w, h = self.image_size
        return PolynomialFisheyeModel(
            tuple(a * factor for a in self.coeffs),
            self.principal_point * factor,
            (int(round(w * factor)), int(round(h * factor))),
            self.max_field_angle,
        )


@dataclass(frozen=True, eq=False)
class EquidistantModel:
    a: float
    principal_point: np.ndarray
    max_field_angle: float = math.pi - 1e-9

    def __post_init__(self):
        if self.a <= 0:
            raise DataError("equidistant scale must be positive")
        object.__setattr__(self, "principal_point", _as_principal(self.principal_point))

    def radius(self, theta):
        return self.a * np.asarray(theta, dtype=float)


@dataclass(frozen=True, eq=False)
class DivisionModel:
    """tan(theta) = r / (f (1 + lam r^2)), solved on the branch through r(0)=0."""

    f: float
    lam: float
    principal_point: np.ndarray
    max_field_angle: float = DEFAULT_FOV / 2.0

    def __post_init__(self):
        if self.f <= 0:
            raise DataError("division model scale f must be positive")
        object.__setattr__(self, "principal_point", _as_principal(self.principal_point))

    def radius(self, theta):
        return invert_division_radius(self, theta)


@dataclass(frozen=True, eq=False)
class Line3D:
    """P(t) = direction * t + point, direction normalized on construction."""

    direction: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0:
            raise DegenerateInput("line direction must be non-zero")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))

    def at(self, t):
        t = np.asarray(t, dtype=float)
        return t[..., None] * self.direction + self.point


# ---------------------------------------------------------------------------
# Projection


def field_angles(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return np.arctan2(np.hypot(p[..., 0], p[..., 1]), p[..., 2])


def project_points(model, points, check: bool = True) -> np.ndarray:
    """Vectorized ``project_point`` over an (..., 3) array."""
    p = np.asarray(points, dtype=float)
    rho = np.hypot(p[..., 0], p[..., 1])
    if check and np.any((rho == 0) & (p[..., 2] == 0)):
        raise DegeneratePoint("cannot project the camera center")
    theta = np.arctan2(rho, p[..., 2])
    if check and np.any(theta > model.max_field_angle + 1e-12):
        raise FieldAngleExceeded(
            f"field angle {np.degrees(theta.max()):.3f} deg exceeds {np.degrees(model.max_field_angle):.3f} deg"
        )
    r = model.radius(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(rho > 0, r / np.where(rho > 0, rho, 1.0), 0.0)
    return model.principal_point + scale[..., None] * p[..., :2]


def project_point(model, point) -> np.ndarray:
    p = np.asarray(point, dtype=float).reshape(3)
    return project_points(model, p)


def project_line_curve(model, line: Line3D, t_range, n_samples: int) -> np.ndarray:
    """Image of the segment ``t_range`` of a 3D line, sampled uniformly in t."""
    if n_samples < 2:
        raise DataError("n_samples must be at least 2")
    t0, t1 = t_range
    # Closest approach of the segment to the camera center.
    tc = float(np.clip(-np.dot(line.direction, line.point), min(t0, t1), max(t0, t1)))
    if np.linalg.norm(line.at(tc)) < 1e-12:
        raise DegeneratePoint("line passes through the camera center")
    ts = np.linspace(t0, t1, n_samples)
    return project_points(model, line.at(ts))


def invert_division_radius(model: DivisionModel, theta):
    """Image radius for field angle ``theta`` under the division model.

    Written with sin/cos so the same root stays continuous through 90 deg:
    r = 2 f sin / (cos + sqrt(cos^2 - 4 lam f^2 sin^2)).
    """
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0) or np.any(th >= math.pi):
        raise Unrepresentable("field angle must lie in [0, pi)")
    s, c = np.sin(th), np.cos(th)
    disc = c * c - 4.0 * model.lam * model.f ** 2 * s * s
    if np.any(disc < 0):
        raise Unrepresentable("no real division-model radius for this field angle")
    denom = c + np.sqrt(disc)
    zero = th == 0
    if np.any((denom <= 0) & ~zero):
        raise Unrepresentable("field angle beyond the division model's representable range")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(zero, 0.0, 2.0 * model.f * s / np.where(zero, 1.0, denom))
    return r if r.ndim else float(r)


def division_forward_angle(model: DivisionModel, radius):
    """theta from r: atan2(r, f (1 + lam r^2))."""
    r = np.asarray(radius, dtype=float)
    return np.arctan2(r, model.f * (1.0 + model.lam * r * r))


# ---------------------------------------------------------------------------
# Division-model fitting


def _div_radius_and_jac(theta, f, k):
    """Radius and Jacobian w.r.t. (f, k), where lam = k / f^2.

    Returns (None, None) if any sample is unrepresentable.
    """
    lam = k / (f * f)
    s, c = np.sin(theta), np.cos(theta)
    disc = c * c - 4.0 * k * s * s
    if np.any(disc < 0):
        return None, None
    denom = c + np.sqrt(disc)
    pos = theta > 0
    if np.any(denom[pos] <= 0):
        return None, None
    r = np.where(pos, 2.0 * f * s / np.where(pos, denom, 1.0), 0.0)
    # Implicit differentiation of g = f s (1 + lam r^2) - r c = 0.
    dg_dr = 2.0 * lam * f * s * r - c
    safe = np.where(np.abs(dg_dr) > 1e-300, dg_dr, 1.0)
    dr_df_lam = -(s * (1.0 + lam * r * r)) / safe
    dr_dlam = -(f * s * r * r) / safe
    dr_df = dr_df_lam + dr_dlam * (-2.0 * k / f ** 3)
    dr_dk = dr_dlam / (f * f)
    jac = np.column_stack([dr_df, dr_dk])
    jac[~pos] = 0.0  # r(0) = 0 regardless of parameters
    return r, jac


def _sse(theta, radii, f, k) -> float:
    if f <= 0:
        return math.inf
    r, _ = _div_radius_and_jac(theta, f, k)
    if r is None:
        return math.inf
    return float(np.sum((r - radii) ** 2))


def fit_division_radii(theta, radii, max_iter: int = 100) -> tuple[float, float]:
    """Least-squares (f, lam) for samples of r(theta).

    Coarse grid search over (f, k = lam f^2) seeds a damped Gauss-Newton
    refinement; Nelder-Mead takes over if the normal equations are
    ill-conditioned.
    """
    th = np.asarray(theta, dtype=float)
    r = np.asarray(radii, dtype=float)
    if th.shape != r.shape or th.ndim != 1 or len(th) < 2:
        raise DataError("theta and radii must be 1D arrays of equal length")
    pos = th > 0
    if not np.any(pos):
        raise DataError("need at least one positive field angle")
    # Small-angle slope estimates f.
    i0 = np.argmin(np.where(pos, th, np.inf))
    f0 = r[i0] / math.tan(min(th[i0], 1.0))
    f_grid = f0 * np.geomspace(0.5, 2.0, 41)
    k_grid = np.linspace(-2.0, 0.5, 51)
    best = (math.inf, f0, 0.0)
    for f in f_grid:
        for k in k_grid:
            e = _sse(th, r, f, k)
            if e < best[0]:
                best = (e, f, k)
    initial, f, k = best
    if not math.isfinite(initial):
        raise FitDiverged("no representable starting point on the search grid")

    err = initial
    ill = False
    for _ in range(max_iter):
        rr, jac = _div_radius_and_jac(th, f, k)
        res = rr - r
        jtj = jac.T @ jac
        if np.linalg.cond(jtj) > 1e14:
            ill = True
            break
        step = np.linalg.solve(jtj, -jac.T @ res)
        alpha = 1.0
        improved = False
        while alpha > 1e-8:
            nf, nk = f + alpha * step[0], k + alpha * step[1]
            ne = _sse(th, r, nf, nk)
            if ne < err:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        rel = (err - ne) / max(err, 1e-300)
        f, k, err = nf, nk, ne
        if rel < 1e-12 or np.linalg.norm(alpha * step) < 1e-12 * (abs(f) + abs(k)):
            break

    if ill:
        out = minimize(
            lambda p: _sse(th, r, p[0], p[1]), x0=[f, k], method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
        )
        if out.fun < err:
            f, k, err = float(out.x[0]), float(out.x[1]), float(out.fun)

    if not math.isfinite(err) or err > initial:
        raise FitDiverged("refinement failed to improve on the grid-search start")
    return float(f), float(k / (f * f))


def fit_division_model(poly: PolynomialFisheyeModel, theta_samples=None):
    """Fit a DivisionModel to a polynomial model's radius curve.

    Returns ``(model, residuals)`` with signed radial residuals
    r_div - r_poly in pixels, one per sample.
    """
    if theta_samples is None:
        theta_samples = np.linspace(0.0, poly.max_field_angle, N_FIT_SAMPLES)
    th = np.asarray(theta_samples, dtype=float)
    if len(th) < 8:
        raise DataError("need at least 8 field-angle samples")
    f, lam = fit_division_radii(th, poly.radius(th))
    model = DivisionModel(f, lam, poly.principal_point, poly.max_field_angle)
    return model, invert_division_radius(model, th) - poly.radius(th)


def line_circle_residual(model, line: Line3D, n_samples: int = 50, t_range=(-1.0, 1.0)) -> float:
    """Max distance of a projected 3D line's samples to their best-fit circle."""
    if n_samples < 5:
        raise DataError("n_samples must be at least 5")
    pts = project_line_curve(model, line, t_range, n_samples)
    return fit_circle_kasa(pts).max_residual


# ---------------------------------------------------------------------------
# Calibration and rig


def woodscape_like_coefficients(f: float, k: float, max_field_angle: float = DEFAULT_FOV / 2.0, n: int = 256):
    """Quartic (no constant term) least-squares fit to a division curve.

    This is how the shipped calibrations were produced: a quartic that a
    division model tracks closely, mimicking real WoodScape lenses.
    """
    th = np.linspace(0.0, max_field_angle, n)
    r = invert_division_radius(DivisionModel(f, k / f ** 2, (0, 0), max_field_angle), th)
    basis = np.stack([th ** i for i in range(1, 5)], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, r, rcond=None)
    return tuple(float(c) for c in coeffs)


def rotation_from_ypr(yaw_deg: float, pitch_deg: float, roll_deg: float = 0.0) -> np.ndarray:
    """Camera-to-vehicle rotation. Vehicle frame: x forward, y left, z up.

    ``yaw`` is the optical-axis azimuth (0 = forward, 90 = left), ``pitch``
    tilts it downward, ``roll`` spins the image about the axis.
    """
    psi, beta, gam = np.radians([yaw_deg, pitch_deg, roll_deg])
    fwd = np.array([math.cos(beta) * math.cos(psi), math.cos(beta) * math.sin(psi), -math.sin(beta)])
    right = np.array([math.sin(psi), -math.cos(psi), 0.0])
    down = np.cross(fwd, right)
    cr, sr = math.cos(gam), math.sin(gam)
    right, down = cr * right + sr * down, -sr * right + cr * down
    return np.column_stack([right, down, fwd])


@dataclass(frozen=True, eq=False)
class CameraPose:
    rotation: np.ndarray  # camera-to-vehicle
    translation: np.ndarray  # camera position in the vehicle frame, meters

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0:
            raise DataError("pose rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def to_camera(self, points):
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self.rotation

    def to_vehicle(self, points):
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class RigCamera:
    camera_id: str
    pose: CameraPose
    model: PolynomialFisheyeModel
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[RigCamera, ...]

    def __post_init__(self):
        ids = [c.camera_id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate camera ids in rig: {ids}")

    def __getitem__(self, camera_id: str) -> RigCamera:
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise KeyError(camera_id)

    @property
    def ids(self) -> list[str]:
        return [c.camera_id for c in self.cameras]

    def scaled(self, factor: float) -> "CameraRig":
        return CameraRig(tuple(RigCamera(c.camera_id, c.pose, c.model.scaled(factor), c.meta) for c in self.cameras))


def rig_from_dict(data: dict) -> CameraRig:
    cams = []
    for cid in sorted(data, key=lambda c: (CAMERA_IDS.index(c) if c in CAMERA_IDS else len(CAMERA_IDS), c)):
        if cid.startswith("_"):
            continue
        entry = data[cid]
        try:
            coeffs = tuple(entry[k] for k in ("a1", "a2", "a3", "a4"))
            pose = entry["pose"]
            rot = pose.get("rotation")
            if rot is None:
                rot = rotation_from_ypr(pose["yaw_deg"], pose["pitch_deg"], pose.get("roll_deg", 0.0))
            model = PolynomialFisheyeModel(
                coeffs,
                entry["principal_point"],
                tuple(entry["image_size"]),
                math.radians(entry.get("fov_deg", 190.0)) / 2.0,
            )
        except KeyError as exc:
            raise DataError(f"calibration entry {cid!r} is missing {exc}") from None
        meta = {k: v for k, v in entry.items() if k not in ("a1", "a2", "a3", "a4", "principal_point", "image_size", "pose", "fov_deg")}
        cams.append(RigCamera(cid, CameraPose(rot, pose["translation"]), model, meta))
    return CameraRig(tuple(cams))


def load_calibration(path=None) -> CameraRig:
    """Read a calibration JSON; ``None`` loads the bundled synthetic rig."""
    if path is None:
        path = Path(__file__).with_name("data") / "calibration.json"
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"cannot parse calibration {path}: {exc}") from None
    return rig_from_dict(data)
