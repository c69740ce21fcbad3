"""scikit-learn style wrappers around the fitting procedures."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .camera import DivisionModel, PolynomialFisheyeModel, fit_division_model, fit_division_radii, invert_division_radius
from .detect_math import anchor_iou, kmeans_anchors
from .fitting import CurvedBoxSearchConfig, contour_mask, fit_representation
from .geometry import polygon_mask_iou
from .sampling import AdaptiveSamplingConfig, sample_adaptive, sample_uniform_angular, sample_uniform_perimeter
from .shapes import shape_to_polygon
from .validation import check_consistent_length, check_contours, check_masks, check_vector, check_wh


class DivisionModelRegressor(RegressorMixin, BaseEstimator):
    """Fits r(theta) samples with the two-parameter division model.

    X holds field angles in radians, y radii in pixels.
    """

    def __init__(self, max_iter: int = 100):
        self.max_iter = max_iter

    def fit(self, X, y):
        theta = check_vector(X, "X", min_len=8)
        r = check_vector(y, "y", min_len=8)
        check_consistent_length(theta, r)
        self.f_, self.lambda_ = fit_division_radii(theta, r, self.max_iter)
        self.n_features_in_ = 1
        return self

    def fit_polynomial(self, poly: PolynomialFisheyeModel, theta=None):
        model, res = fit_division_model(poly, theta)
        self.f_, self.lambda_ = model.f, model.lam
        self.residuals_ = res
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "f_")
        return invert_division_radius(self.model_, check_vector(X))

    @property
    def model_(self) -> DivisionModel:
        check_is_fitted(self, "f_")
        return DivisionModel(self.f_, self.lambda_, (0.0, 0.0))


class RepresentationFitter(TransformerMixin, BaseEstimator):
    """Contours in, fitted shapes out. Stateless: ``fit`` only validates."""

    def __init__(self, kind: str = "oriented", n_center_candidates: int = 64, arc_tolerance: float = 0.25):
        self.kind = kind
        self.n_center_candidates = n_center_candidates
        self.arc_tolerance = arc_tolerance

    def _cfg(self):
        return CurvedBoxSearchConfig(n_center_candidates=self.n_center_candidates, arc_tolerance=self.arc_tolerance)

    def fit(self, X, y=None, masks=None):
        check_contours(X)
        self.n_features_in_ = 1
        return self

    def transform(self, X, masks=None) -> list:
        contours = check_contours(X)
        cfg = self._cfg()
        return [fit_representation(self.kind, c, m, cfg) for c, m in zip(contours, check_masks(masks, len(contours)))]

    def score(self, X, y=None, masks=None) -> float:
        """Mean IoU of the fitted shapes against the contours' masks."""
        contours = check_contours(X)
        ms = [m if m is not None else contour_mask(c) for c, m in zip(contours, check_masks(masks, len(contours)))]
        shapes = self.transform(contours, ms)
        return float(np.mean([polygon_mask_iou(shape_to_polygon(s, self.arc_tolerance).vertices, m)
                              for s, m in zip(shapes, ms)]))


class PolygonSampler(TransformerMixin, BaseEstimator):
    """Samples N polygon vertices per contour; transform returns the
    regression parameters as an (n_contours, n_params) array."""

    def __init__(self, mode: str = "perimeter", n_vertices: int = 24):
        self.mode = mode
        self.n_vertices = n_vertices

    def fit(self, X, y=None):
        check_contours(X)
        if self.mode not in ("angular", "perimeter", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.n_features_in_ = 1
        return self

    def sample(self, X) -> list:
        contours = check_contours(X)
        if self.mode == "angular":
            return [sample_uniform_angular(c, self.n_vertices) for c in contours]
        if self.mode == "perimeter":
            return [sample_uniform_perimeter(c, self.n_vertices) for c in contours]
        if self.mode == "adaptive":
            cfg = AdaptiveSamplingConfig(target_vertices=self.n_vertices)
            return [sample_adaptive(c, cfg) for c in contours]
        raise ValueError(f"unknown mode {self.mode!r}")

    def transform(self, X) -> np.ndarray:
        return np.vstack([s.params() for s in self.sample(X)])


class AnchorKMeans(BaseEstimator):
    """k-means anchor boxes under 1 - IoU distance."""

    def __init__(self, n_anchors: int = 3, seed: int = 0, max_iter: int = 300):
        self.n_anchors = n_anchors
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        self.anchors_ = kmeans_anchors(check_wh(X, "X"), self.n_anchors, self.seed, self.max_iter)
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "anchors_")
        return np.argmax(anchor_iou(check_wh(X, "X"), self.anchors_), axis=-1)

    def score(self, X, y=None) -> float:
        """Mean best-anchor IoU."""
        check_is_fitted(self, "anchors_")
        return float(np.mean(np.max(anchor_iou(check_wh(X, "X"), self.anchors_), axis=-1)))
