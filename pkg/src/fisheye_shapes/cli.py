"""Command-line entry point: ``fisheye-shapes <command> ...``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure. The worker
count for per-image parallelism comes from FISHEYE_SHAPES_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CAMERA_IDS, fit_division_model, load_calibration
from .cli_io import (
    AnnotationFile,
    ImageRecord,
    ObjectRecord,
    RunConfig,
    canonical_json,
    curves_svg,
    emit_map_table,
    emit_report,
    emit_vertex_table,
    load_annotations,
    object_mask,
    render_overlay,
    report_from_dict,
    report_to_dict,
    save_annotations,
    split_of,
)
from .detect_math import DetectionRecord, nms_generalized
from .errors import DataError, FisheyeShapesError, NumericError, ParseError, SchemaError
from .fitting import fit_representation
from .geometry import polygon_mask_iou
from .metrics import EvaluationReport, VERTEX_COUNTS, average_precision, is_monotone
from .sampling import AdaptiveSamplingConfig, sample_adaptive, sample_uniform_angular, sample_uniform_perimeter
from .shapes import shape_from_dict, shape_to_dict, shape_to_polygon
from .synth import SceneConfig, generate_scene, render_instances, render_open_cube

log = logging.getLogger("fisheye_shapes")

WORKERS_ENV = "FISHEYE_SHAPES_WORKERS"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise DataError(f"{WORKERS_ENV} must be an integer") from None


def _pmap(fn, items):
    """Ordered map, in a process pool when more than one worker is set."""
    items = list(items)
    n = _workers()
    if n > 1 and len(items) > 1:
        with ProcessPoolExecutor(n) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    over = {}
    if args.calib:
        over["calibration"] = args.calib
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "reps", None):
        over["representations"] = tuple(r.strip() for r in args.reps.split(",") if r.strip())
    if over:
        cfg = RunConfig(**{**cfg.__dict__, **over})
    return cfg


def _write(path, text: str):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


# ---------------------------------------------------------------------------
# Per-image workers (module level so they pickle)


def _fit_image(job):
    image, reps, base_dir, lenient = job
    out = []
    for k, obj in enumerate(image.objects):
        try:
            mask = object_mask(image, obj, base_dir)
            shapes, ious = {}, {}
            for rep in reps:
                s = fit_representation(rep, obj.contour, mask)
                shapes[rep] = s
                ious[rep] = polygon_mask_iou(shape_to_polygon(s).vertices, mask)
            out.append((shapes, ious, None))
        except FisheyeShapesError as exc:
            msg = f"image {image.image_id!r} object {k}: {type(exc).__name__}: {exc}"
            if not lenient:
                raise type(exc)(msg) from None
            out.append(({}, {}, msg))
    return out


def _eval_image(job):
    image, reps, base_dir, lenient = job
    out = []
    for k, obj in enumerate(image.objects):
        try:
            mask = object_mask(image, obj, base_dir)
        except FisheyeShapesError as exc:
            if not lenient:
                raise
            out.extend((rep, None, str(exc)) for rep in reps)
            continue
        for rep in reps:
            try:
                s = obj.shapes.get(rep) or fit_representation(rep, obj.contour, mask)
                out.append((rep, polygon_mask_iou(shape_to_polygon(s).vertices, mask), None))
            except FisheyeShapesError as exc:
                msg = f"image {image.image_id!r} object {k} {rep}: {type(exc).__name__}: {exc}"
                if not lenient:
                    raise type(exc)(msg) from None
                out.append((rep, None, msg))
    return image.camera_id, out


# ---------------------------------------------------------------------------
# Commands


def cmd_fit(args) -> int:
    cfg = _config(args)
    af = load_annotations(args.annotations)
    base = Path(args.annotations).parent
    results = _pmap(_fit_image, [(im, cfg.representations, base, args.lenient) for im in af.images])
    failed = 0
    for im, res in zip(af.images, results):
        for obj, (shapes, ious, err) in zip(im.objects, res):
            if err:
                log.warning(err)
                failed += 1
            obj.shapes.update(shapes)
            obj.iou.update(ious)
    save_annotations(af, args.out, base)
    print(f"fitted {sum(len(im.objects) for im in af.images) - failed} objects, {failed} failed -> {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    af = load_annotations(args.annotations)
    name = {"angular": f"angular{args.n}", "perimeter": f"poly{args.n}", "adaptive": f"poly{args.n}-adaptive"}[args.mode]
    for im, k, obj in af.objects():
        try:
            if args.mode == "angular":
                s = sample_uniform_angular(obj.contour, args.n)
            elif args.mode == "perimeter":
                s = sample_uniform_perimeter(obj.contour, args.n)
            else:
                s = sample_adaptive(obj.contour, AdaptiveSamplingConfig(target_vertices=args.n))
        except FisheyeShapesError as exc:
            if not args.lenient:
                raise type(exc)(f"image {im.image_id!r} object {k}: {exc}") from None
            log.warning("image %r object %d: %s", im.image_id, k, exc)
            continue
        obj.shapes[name] = s
    save_annotations(af, args.out, Path(args.annotations).parent)
    print(f"sampled {name} -> {args.out}")
    return EXIT_OK


def _selected_images(af: AnnotationFile, cfg: RunConfig, split: str | None):
    if not split:
        return list(af.images)
    return [im for im in af.images if split_of(im.image_id, cfg.split) == split]


def cmd_eval_miou(args) -> int:
    cfg = _config(args)
    af = load_annotations(args.annotations)
    base = Path(args.annotations).parent
    images = _selected_images(af, cfg, args.split)
    reps = cfg.representations
    if args.vertex_study:
        reps = tuple(f"poly{n}" for n in VERTEX_COUNTS)
    results = _pmap(_eval_image, [(im, reps, base, args.lenient) for im in images])
    report = EvaluationReport(tuple(reps))
    for camera, res in results:
        for rep, iou, err in res:
            if err:
                log.warning(err)
                report.failures[(camera, rep)] += 1
            else:
                report.add(camera, rep, iou)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.vertex_study:
        study = {n: report.miou(None, f"poly{n}") for n in VERTEX_COUNTS}
        vals = [v for v in study.values() if v is not None]
        md = emit_vertex_table(study, "markdown") + f"\nMonotone within 0.5%: {is_monotone(vals)}\n"
        _write(out / "vertex_study.csv", emit_vertex_table(study, "csv"))
        _write(out / "vertex_study.md", md)
        print(md, end="")
    else:
        md = emit_report(report, "markdown")
        _write(out / "report.csv", emit_report(report, "csv"))
        _write(out / "report.md", md)
        print(md, end="")
    _write(out / "report.json", canonical_json(report_to_dict(report)))
    return EXIT_OK


def load_detections(path) -> list[DetectionRecord]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        return [DetectionRecord(shape_from_dict(d["shape"]), int(d.get("class", 0)), float(d["confidence"]),
                                str(d["image_id"])) for d in data["detections"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed detection ({exc})") from None


def save_detections(dets, path):
    rows = [{"image_id": d.image_id, "class": d.class_id, "confidence": d.confidence, "shape": shape_to_dict(d.shape)}
            for d in dets]
    _write(path, canonical_json({"version": "1", "detections": rows}))


def _gt_records(af: AnnotationFile, rep: str, base) -> list[DetectionRecord]:
    out = []
    for im, k, obj in af.objects():
        s = obj.shapes.get(rep)
        if s is None:
            s = fit_representation(rep, obj.contour, object_mask(im, obj, base))
        out.append(DetectionRecord(s, obj.class_id, 1.0, im.image_id))
    return out


def cmd_eval_map(args) -> int:
    cfg = _config(args)
    af = load_annotations(args.gt)
    base = Path(args.gt).parent
    camera_of = {im.image_id: im.camera_id for im in af.images}
    results = {}
    for rep in cfg.representations:
        gt = _gt_records(af, rep, base)
        preds = load_detections(args.pred) if args.pred else list(gt)
        per = {}
        for cid in (*CAMERA_IDS, "all"):
            g = [d for d in gt if cid == "all" or camera_of.get(d.image_id) == cid]
            p = [d for d in preds if cid == "all" or camera_of.get(d.image_id) == cid]
            per[cid] = average_precision(p, g, args.iou_thresh) if g else None
        results[rep] = per
    out = Path(args.out)
    md = emit_map_table(results, "markdown")
    _write(out / "map.csv", emit_map_table(results, "csv"))
    _write(out / "map.md", md)
    print(md, end="")
    return EXIT_OK


def cmd_nms(args) -> int:
    dets = load_detections(args.detections)
    by_image = {}
    for d in dets:
        by_image.setdefault(d.image_id, []).append(d)
    kept = []
    for image_id in sorted(by_image):
        kept.extend(nms_generalized(by_image[image_id], score_thresh=args.score_thresh, iou_thresh=args.iou_thresh))
    save_detections(kept, args.out)
    print(f"kept {len(kept)} of {len(dets)} detections -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        data = json.loads(Path(args.input).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.input}: {exc}") from None
    text = emit_report(report_from_dict(data), args.format)
    if args.out:
        _write(args.out, text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    if args.open_cube:
        cam = load_calibration(cfg.calibration)[args.camera]
        curves = render_open_cube(cam.model, args.grid_density)
        _write(out, curves_svg(cam.model.image_size, curves))
        print(f"{len(curves)} curves -> {out}")
        return EXIT_OK
    if not args.annotations:
        raise DataError("render needs --annotations or --open-cube")
    af = load_annotations(args.annotations)
    images = [im for im in af.images if args.image_id in (None, im.image_id)]
    if args.image_id and not images:
        raise DataError(f"no image {args.image_id!r} in {args.annotations}")
    for im in images:
        svg = render_overlay((im.width, im.height), [o.shapes for o in im.objects], contours=[o.contour for o in im.objects])
        _write(out / f"{im.image_id}.svg" if len(images) > 1 or out.suffix != ".svg" else out, svg)
    print(f"rendered {len(images)} overlays -> {out}")
    return EXIT_OK


def cmd_fit_division(args) -> int:
    cfg = _config(args)
    rig = load_calibration(cfg.calibration)
    cam = rig[args.camera]
    th = np.linspace(0.0, cam.model.max_field_angle, args.samples)
    model, res = fit_division_model(cam.model, th)
    max_res = float(np.abs(res).max())
    print(f"f={model.f:.6f} lambda={model.lam:.9e} max_residual_px={max_res:.6f}")
    lines = ["theta_deg,r_poly_px,r_div_px,residual_px"]
    r_poly = cam.model.radius(th)
    for t, rp, e in zip(th, r_poly, res):
        lines.append(f"{math.degrees(t):.6f},{rp:.6f},{rp + e:.6f},{e:.6f}")
    _write(args.out or f"division_residuals_{args.camera}.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _scene_seed(seed: int, scene: int) -> int:
    return int(np.random.SeedSequence([seed, scene]).generate_state(1)[0])


def cmd_gen_synth(args) -> int:
    cfg = _config(args)
    rig = load_calibration(cfg.calibration).scaled(args.scale)
    out = Path(args.out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "previews").mkdir(parents=True, exist_ok=True)
    images = []
    n_scenes = math.ceil(args.images / len(rig.cameras))
    k = 0
    for s in range(n_scenes):
        scene = generate_scene(SceneConfig(seed=_scene_seed(cfg.seed, s), n_objects=args.objects))
        for cam in rig.cameras:
            if k >= args.images:
                break
            k += 1
            image_id = f"{cfg.seed}-{s:04d}-{cam.camera_id}"
            w, h = cam.model.image_size
            objs = []
            for inst in render_instances(scene, cam):
                rel = f"masks/{image_id}-{inst.object_index:02d}.pgm"
                (out / rel).write_bytes(inst.mask.to_pgm())
                objs.append(ObjectRecord(scene[inst.object_index].class_id, inst.contour, mask_path=rel))
            im = ImageRecord(image_id, cam.camera_id, w, h, objs)
            images.append(im)
            _write(out / "previews" / f"{image_id}.svg", render_overlay((w, h), [], contours=[o.contour for o in objs]))
    save_annotations(AnnotationFile(images), out / "annotations.json")
    print(f"{len(images)} images, {sum(len(i.objects) for i in images)} objects -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default from config, else 0)")
    common.add_argument("--calib", help="calibration JSON (default: bundled rig)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--lenient", action="store_true", help="log per-object errors instead of failing")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="fisheye-shapes", description="Fisheye object representations: fit, sample, evaluate.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", parents=[common], help="fit representations to annotated contours")
    s.add_argument("--annotations", required=True)
    s.add_argument("--reps", help="comma-separated representation names")
    s.set_defaults(func=cmd_fit, out_required=True)

    s = sub.add_parser("sample", parents=[common], help="sample polygon vertices from contours")
    s.add_argument("--annotations", required=True)
    s.add_argument("--mode", choices=("angular", "perimeter", "adaptive"), required=True)
    s.add_argument("--n", type=int, default=24)
    s.set_defaults(func=cmd_sample, out_required=True)

    s = sub.add_parser("eval-miou", parents=[common], help="representation capacity table")
    s.add_argument("--annotations", required=True)
    s.add_argument("--reps")
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--vertex-study", action="store_true", help="uniform polygons with N in 4..120")
    s.set_defaults(func=cmd_eval_miou, out_required=True)

    s = sub.add_parser("eval-map", parents=[common], help="detection mAP per camera")
    s.add_argument("--gt", required=True, help="annotation file with ground-truth contours")
    s.add_argument("--pred", help="detections JSON (default: ground truth as predictions)")
    s.add_argument("--reps", default="oriented")
    s.add_argument("--iou-thresh", type=float, default=0.5)
    s.set_defaults(func=cmd_eval_map, out_required=True)

    s = sub.add_parser("nms", parents=[common], help="representation-aware non-maximum suppression")
    s.add_argument("--detections", required=True)
    s.add_argument("--iou-thresh", type=float, default=0.5)
    s.add_argument("--score-thresh", type=float, default=0.0)
    s.set_defaults(func=cmd_nms, out_required=True)

    s = sub.add_parser("report", parents=[common], help="re-emit a saved report as CSV or markdown")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    s.set_defaults(func=cmd_report, out_required=False)

    s = sub.add_parser("render", parents=[common], help="SVG overlays or the open-cube projection")
    s.add_argument("--annotations")
    s.add_argument("--image-id")
    s.add_argument("--open-cube", action="store_true")
    s.add_argument("--camera", choices=CAMERA_IDS, default="front")
    s.add_argument("--grid-density", type=int, default=4)
    s.set_defaults(func=cmd_render, out_required=True)

    s = sub.add_parser("fit-division", parents=[common], help="fit the division model to a camera's polynomial")
    s.add_argument("--camera", choices=CAMERA_IDS, default="front")
    s.add_argument("--samples", type=int, default=256)
    s.set_defaults(func=cmd_fit_division, out_required=False)

    s = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic fisheye corpus")
    s.add_argument("--images", type=int, default=40)
    s.add_argument("--objects", type=int, default=SceneConfig.n_objects, help="cuboids per scene")
    s.add_argument("--scale", type=float, default=0.25, help="image scale relative to the calibration")
    s.set_defaults(func=cmd_gen_synth, out_required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.out_required and not args.out:
        parser.error(f"{args.command}: --out is required")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FisheyeShapesError as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyError as exc:
        print(f"data error: unknown id {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
