"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionMismatch, NonFiniteInput
from .geometry import BinaryMask, Contour


def check_finite(a, name: str = "input") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput(f"{name} contains NaN or inf")
    return a


def check_vector(x, name: str = "X", min_len: int = 1) -> np.ndarray:
    """1D float array; a single-column 2D array is flattened."""
    a = check_finite(x, name)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1D or a single column, got shape {a.shape}")
    if len(a) < min_len:
        raise DataError(f"{name} needs at least {min_len} samples")
    return a


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays if a is not None}
    if len(lengths) > 1:
        raise DimensionMismatch(f"inconsistent sample counts: {sorted(lengths)}")


def check_wh(wh, name: str = "wh") -> np.ndarray:
    a = check_finite(wh, name)
    if a.ndim != 2 or a.shape[1] != 2:
        raise DimensionMismatch(f"{name} must have shape (n, 2), got {a.shape}")
    if np.any(a <= 0):
        raise DataError(f"{name} sizes must be positive")
    return a


def check_contours(contours) -> list[Contour]:
    """A list of Contour objects from contours or (n, 2) point arrays."""
    if isinstance(contours, Contour):
        return [contours]
    arr = np.asarray(contours, dtype=object) if not isinstance(contours, list) else None
    if arr is not None and arr.ndim == 2 and len(arr) and not isinstance(arr.flat[0], (list, np.ndarray, Contour)):
        # A single (n, 2) array of points.
        return [Contour(np.asarray(contours, dtype=float))]
    return [c if isinstance(c, Contour) else Contour(c) for c in contours]


def check_masks(masks, n: int) -> list[BinaryMask | None]:
    if masks is None:
        return [None] * n
    out = [m if m is None or isinstance(m, BinaryMask) else BinaryMask(m) for m in masks]
    if len(out) != n:
        raise DimensionMismatch(f"{n} contours but {len(out)} masks")
    return out
