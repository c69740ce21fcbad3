"""Object representations for fisheye cameras: lens models, boxes, curved
boxes and polygons, best-fit procedures, IoU/mAP evaluation, detector loss
kernels and a synthetic ground-truth generator."""

__version__ = "0.1.0"

from .camera import (
    CameraRig,
    DivisionModel,
    EquidistantModel,
    Line3D,
    PolynomialFisheyeModel,
    fit_division_model,
    line_circle_residual,
    load_calibration,
    project_line_curve,
    project_point,
)
from .errors import DataError, FisheyeShapesError, NumericError
from .fitting import (
    REPRESENTATIONS,
    CurvedBoxSearchConfig,
    fit_curved_box,
    fit_ellipse,
    fit_oriented_box,
    fit_representation,
    fit_standard_box,
)
from .geometry import BinaryMask, Contour, GridSpec2D, convex_clip_iou, mask_iou, polygon_mask_iou, rasterize_polygon
from .sampling import AdaptiveSamplingConfig, sample_adaptive, sample_uniform_angular, sample_uniform_perimeter
from .shapes import (
    CurvedBox,
    EllipseShape,
    OrientedBox,
    PolarPolygon,
    StandardBox,
    VertexPolygon,
    shape_area,
    shape_to_polygon,
)

__all__ = [
    "AdaptiveSamplingConfig",
    "BinaryMask",
    "CameraRig",
    "Contour",
    "CurvedBox",
    "CurvedBoxSearchConfig",
    "DataError",
    "DivisionModel",
    "EllipseShape",
    "EquidistantModel",
    "FisheyeShapesError",
    "GridSpec2D",
    "Line3D",
    "NumericError",
    "OrientedBox",
    "PolarPolygon",
    "PolynomialFisheyeModel",
    "REPRESENTATIONS",
    "StandardBox",
    "VertexPolygon",
    "convex_clip_iou",
    "fit_curved_box",
    "fit_division_model",
    "fit_ellipse",
    "fit_oriented_box",
    "fit_representation",
    "fit_standard_box",
    "line_circle_residual",
    "load_calibration",
    "mask_iou",
    "polygon_mask_iou",
    "project_line_curve",
    "project_point",
    "rasterize_polygon",
    "sample_adaptive",
    "sample_uniform_angular",
    "sample_uniform_perimeter",
    "shape_area",
    "shape_to_polygon",
]
