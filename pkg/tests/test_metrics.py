import math

import numpy as np
import pytest

from fisheye_shapes.detect_math import DetectionRecord
from fisheye_shapes.errors import EmptyGroundTruth
from fisheye_shapes.fitting import fit_representation
from fisheye_shapes.geometry import Contour, polygon_area
from fisheye_shapes.metrics import (
    EvaluationReport,
    ObjectSample,
    all_point_ap,
    average_precision,
    is_monotone,
    object_iou,
    representation_miou,
    vertex_count_study,
)
from fisheye_shapes.shapes import EllipseShape, OrientedBox, StandardBox, shape_area

from conftest import circle_points


def rect_sample(i, cam="front"):
    x, y = 5 + 3 * i, 7 + 2 * i
    v = np.array([[x, y], [x + 20 + i, y], [x + 20 + i, y + 10], [x, y + 10]], float)
    return ObjectSample(f"img{i}", cam, Contour(v))


def test_rectangles_give_standard_miou_one():
    rep = representation_miou([rect_sample(i) for i in range(5)], ["standard"])
    assert rep.miou(None, "standard") == 1.0
    assert rep.miou("front", "standard") == 1.0
    assert rep.miou("rear", "standard") is None


def test_circle_gives_ellipse_miou_near_one():
    s = ObjectSample("c", "rear", Contour(circle_points(30.0, 400, (40, 40))))
    rep = representation_miou([s], ["ellipse"])
    assert rep.miou(None, "ellipse") == pytest.approx(1.0, abs=0.01)


def test_enclosing_iou_equals_area_ratio(corpus40):
    for s in corpus40[:10]:
        for kind in ("standard", "oriented", "ellipse"):
            shape = fit_representation(kind, s.contour, s.mask)
            assert object_iou(shape, s) == pytest.approx(polygon_area(s.contour.vertices) / shape_area(shape), abs=0.01 + 2 / math.sqrt(s.mask.count))


def test_report_order_independent_and_weighted(corpus40):
    kinds = ["standard", "oriented", "poly4"]
    a = representation_miou(corpus40, kinds)
    b = representation_miou(corpus40[::-1], kinds)
    for k in kinds:
        assert a.miou(None, k) == b.miou(None, k)
        num = sum(a.miou(c, k) * a.count(c, k) for c in a.cameras if a.count(c, k))
        assert a.miou(None, k) == pytest.approx(num / a.count(None, k), rel=1e-12)
        assert 0.0 <= a.miou(None, k) <= 1.0


def test_report_parallel_matches_serial(corpus40):
    a = representation_miou(corpus40[:12], ["standard", "poly24"], workers=1)
    b = representation_miou(corpus40[:12], ["standard", "poly24"], workers=2)
    assert a.table() == b.table()


def test_merge_is_associative():
    r1, r2 = EvaluationReport(("standard",)), EvaluationReport(("standard",))
    r1.add("front", "standard", 0.5)
    r2.add("left", "standard", 0.7)
    r2.add("front", "standard", 0.9)
    m = r1.merge(r2)
    assert m.count(None, "standard") == 3
    assert m.miou("front", "standard") == pytest.approx(0.7)


def test_vertex_study_circle_corpus_strict():
    ds = [ObjectSample(f"c{i}", "front", Contour(circle_points(20.0 + i, 300, (40, 40)))) for i in range(4)]
    study = vertex_count_study(ds)
    assert study[120] > study[4]
    assert is_monotone(list(study.values()))


def test_is_monotone_noise():
    assert is_monotone([0.5, 0.498, 0.6])
    assert not is_monotone([0.5, 0.49, 0.6])


# --- AP ---------------------------------------------------------------------------


def gt_set():
    return [
        DetectionRecord(StandardBox(50, 50, 20, 20), 0, 1.0, "a"),
        DetectionRecord(OrientedBox(150, 80, 30, 10, 20), 0, 1.0, "a"),
        DetectionRecord(EllipseShape(60, 60, 30, 20, 0), 1, 1.0, "b"),
    ]


def test_gt_as_predictions_is_exactly_one():
    gt = gt_set()
    res = average_precision(gt, gt)
    assert res.mAP == 1.0
    assert res.mean_match_iou == pytest.approx(1.0)


def test_no_predictions_is_zero():
    assert average_precision([], gt_set()).mAP == 0.0


def test_tp_then_fp_is_one():
    gt = [DetectionRecord(StandardBox(50, 50, 20, 20), 0, 1.0, "a")]
    preds = [DetectionRecord(StandardBox(50, 50, 20, 20), 0, 0.9, "a"),
             DetectionRecord(StandardBox(300, 300, 20, 20), 0, 0.4, "a")]
    assert average_precision(preds, gt).mAP == 1.0
    # Reversed confidences: FP first, AP drops to 0.5.
    preds2 = [DetectionRecord(p.shape, 0, 1.3 - p.confidence, "a") for p in preds]
    assert average_precision(preds2, gt).mAP == pytest.approx(0.5)


def test_each_gt_matched_once():
    gt = [DetectionRecord(StandardBox(50, 50, 20, 20), 0, 1.0, "a")]
    preds = [DetectionRecord(StandardBox(50, 50, 20, 20), 0, 0.9, "a"),
             DetectionRecord(StandardBox(51, 50, 20, 20), 0, 0.8, "a")]
    res = average_precision(preds, gt)
    assert res.n_matches == 1 and res.mAP == 1.0


def test_class_without_gt_excluded_and_empty_gt_raises():
    preds = [DetectionRecord(StandardBox(50, 50, 20, 20), 5, 0.9, "a")] + gt_set()
    assert average_precision(preds, gt_set()).per_class.keys() == {0, 1}
    with pytest.raises(EmptyGroundTruth):
        average_precision(preds, [])


def test_ap_monotone_in_threshold():
    rng = np.random.default_rng(0)
    gt, preds = [], []
    for i in range(30):
        x, y = rng.uniform(0, 500, 2)
        gt.append(DetectionRecord(StandardBox(x, y, 30, 20), 0, 1.0, str(i % 5)))
        preds.append(DetectionRecord(StandardBox(x + rng.normal(0, 4), y + rng.normal(0, 4), 30, 20), 0,
                                     float(rng.uniform()), str(i % 5)))
    aps = [average_precision(preds, gt, t).mAP for t in np.linspace(0.1, 0.9, 9)]
    assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))


def test_all_point_ap_envelope():
    assert all_point_ap(np.array([0.5, 0.5, 1.0]), np.array([1.0, 0.5, 2 / 3])) == pytest.approx(0.5 + 0.5 * 2 / 3)
