"""Command-line front end: convert, segment, analyze, metrics, bench, make-model.

Exit codes:
    0  success
    1  usage error
    2  input file missing or unreadable
    3  unsupported image variant
    4  no lung region found
    5  input image is not square
    6  corrupt or unreadable model bundle
    7  malformed predictions CSV
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from covct import bench as benchmod
from covct.errors import CorruptModel, NoLungFound, UnsupportedImage
from covct.imageio import read_png, read_tiff16, write_png
from covct.lungseg import segment_lungs
from covct.metrics import CSV_HEADER, Z_SCORES, accuracy_ci, confusion, derive_metrics, read_predictions, roc_auc
from covct.nn import serde
from covct.nn.model import DEFAULT_THREADS, build_micronet, forward
from covct.phantom import chest_phantom
from covct.raster import minmax_normalize, quantize_to_8bit, resize_bilinear, to_grayscale
from covct.scorecam import DEFAULT_STRIDE, DEFAULT_WORKERS, CamConfig, colorize, compose_overlay, scorecam

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNREADABLE = 2
EXIT_UNSUPPORTED = 3
EXIT_NO_LUNG = 4
EXIT_NOT_SQUARE = 5
EXIT_BAD_MODEL = 6
EXIT_BAD_CSV = 7

SEGMENT_SIZE = 512
LABELS = ("covid", "no-covid")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1 instead of argparse's 2, which means unreadable input here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text: str):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("grid values must be positive integers")
    return values


def _read_gray_square(path):
    try:
        img = read_png(path)
    except UnsupportedImage as exc:
        raise CliError(EXIT_UNSUPPORTED, str(exc)) from exc
    except OSError as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read {path}: {exc}") from exc
    if img.width != img.height:
        raise CliError(EXIT_NOT_SQUARE, f"{path}: image is {img.width}x{img.height}, not square")
    return to_grayscale(img)


def _load_model(path):
    if path is None:
        raise CliError(EXIT_USAGE, "no model bundle given (use --model or COVCT_MODEL)")
    try:
        return serde.load(path)
    except CorruptModel as exc:
        raise CliError(EXIT_BAD_MODEL, f"{path}: {exc}") from exc
    except OSError as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read model {path}: {exc}") from exc


def _emit_json(payload: dict, dest) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    if dest == "-":
        sys.stdout.write(text)
    elif dest:
        Path(dest).write_text(text)


def _prefix(args, src) -> str:
    return args.out_prefix or str(Path(src).with_suffix(""))


def cmd_convert(args) -> int:
    try:
        img = read_tiff16(args.input)
    except UnsupportedImage as exc:
        raise CliError(EXIT_UNSUPPORTED, str(exc)) from exc
    except OSError as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read {args.input}: {exc}") from exc
    write_png(args.output, quantize_to_8bit(minmax_normalize(img)))
    return EXIT_OK


def _segment_512(gray):
    if gray.width != SEGMENT_SIZE:
        gray = resize_bilinear(gray, SEGMENT_SIZE, SEGMENT_SIZE)
    try:
        return gray, segment_lungs(gray)
    except NoLungFound as exc:
        raise CliError(EXIT_NO_LUNG, str(exc)) from exc


def cmd_segment(args) -> int:
    gray = _read_gray_square(args.input)
    _, seg = _segment_512(gray)
    prefix = _prefix(args, args.input)
    write_png(f"{prefix}_mask.png", seg.mask.to_raster())
    write_png(f"{prefix}_segmented.png", seg.segmented)
    write_png(f"{prefix}_enlarged.png", seg.enlarged)
    x, y, w, h = seg.bbox
    print(json.dumps({"mask_path": f"{prefix}_mask.png", "bbox": [x, y, w, h], "contours": len(seg.contours)}),
          file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    model = _load_model(args.model or os.environ.get("COVCT_MODEL"))
    gray = _read_gray_square(args.input)
    prefix = _prefix(args, args.input)
    timings = {}

    t0 = time.perf_counter()
    ct, seg = _segment_512(gray)
    timings["segment"] = (time.perf_counter() - t0) * 1000.0

    mh, mw, _ = model.input_dims
    model_in = gray if (gray.width, gray.height) == (mw, mh) else resize_bilinear(gray, mw, mh)
    t0 = time.perf_counter()
    out = forward(model, model_in, threads=args.threads)
    timings["inference"] = (time.perf_counter() - t0) * 1000.0

    mask_path = f"{prefix}_mask.png"
    write_png(mask_path, seg.mask.to_raster())
    probs = [float(p) for p in out.probs]
    label = out.label
    report = {
        "input": str(args.input),
        "covid_probability": probs[0],
        "no_covid_probability": probs[1],
        "label": LABELS[label],
        "mask_path": mask_path,
        "heatmap_path": None,
        "overlay_path": None,
        "heatmap_skipped": True,
        "timings_ms": {"segment": timings["segment"], "inference": timings["inference"], "cam": None, "overlay": None},
        "config": {"stride": args.stride, "workers": args.workers, "threads": args.threads,
                   "blend": args.blend, "hue": args.hue},
    }
    if label == 0 or args.force_cam:
        config = CamConfig(stride=args.stride, workers=args.workers, colormap=args.colormap)
        t0 = time.perf_counter()
        cam = scorecam(model, model_in, config, activations=out)
        timings["cam"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        relevance = resize_bilinear(cam.values, ct.width, ct.height)
        heat = colorize(relevance, config.colormap)
        overlay = compose_overlay(ct, heat, seg.mask, args.blend, args.hue, args.full_image)
        heat_path, overlay_path = f"{prefix}_heatmap.png", f"{prefix}_overlay.png"
        write_png(heat_path, heat)
        write_png(overlay_path, overlay)
        timings["overlay"] = (time.perf_counter() - t0) * 1000.0
        _emit_json(cam.sidecar(config), f"{prefix}_cam.json")
        report.update(heatmap_path=heat_path, overlay_path=overlay_path, heatmap_skipped=False)
        report["timings_ms"].update(cam=timings["cam"], overlay=timings["overlay"])
    _emit_json(report, args.json or f"{prefix}_report.json")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        rows = read_predictions(args.input)
    except OSError as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read {args.input}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_BAD_CSV, f"{args.input}: {exc}") from exc
    preds = [r.predicted_class for r in rows]
    truth = [r.true_class for r in rows]
    cm = confusion(preds, truth, positive=0)
    payload = {
        "n": cm.total,
        "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn, "positive_class": 0},
        "metrics": derive_metrics(cm),
        "roc_available": False,
        "auc": None,
    }
    prefix = _prefix(args, args.input)
    if len(set(truth)) == 2:
        roc = roc_auc([r.score_covid for r in rows], truth, positive=0)
        roc_path = f"{prefix}_roc.csv"
        with open(roc_path, "w") as fh:
            fh.write("fpr,tpr\n")
            for fpr, tpr in roc.points:
                fh.write(f"{fpr!r},{tpr!r}\n")
        payload.update(roc_available=True, auc=roc.auc, roc_path=roc_path)
    if args.ci:
        acc = payload["metrics"]["accuracy"]
        sizes = args.ci_n or [cm.total]
        payload["confidence_intervals"] = [
            {"confidence": level, "n": n, "low": lo, "high": hi}
            for level in sorted(Z_SCORES) for n in sizes for lo, hi in [accuracy_ci(acc, n, level)]
        ]
    _emit_json(payload, args.json or "-")
    return EXIT_OK


def cmd_bench(args) -> int:
    model = _load_model(args.model or os.environ.get("COVCT_MODEL"))
    mh, mw, _ = model.input_dims
    if args.input:
        gray = _read_gray_square(args.input)
    else:
        gray = chest_phantom(seed=0).image
    img = resize_bilinear(gray, mw, mh)
    report = benchmod.run_grid(model, img, args.threads_grid, args.stride_grid, args.workers_grid, args.runs)
    if args.out_prefix:
        Path(f"{args.out_prefix}_bench.csv").write_text(report.to_csv())
        Path(f"{args.out_prefix}_bench.json").write_text(report.to_json() + "\n")
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_make_model(args) -> int:
    bundle = build_micronet(args.maps, args.seed, input_size=args.input_size)
    if args.head_bias is not None:
        bundle = bundle.with_tensor("head.b", np.asarray(args.head_bias, dtype=np.float64))
    serde.save(bundle, args.output)
    return EXIT_OK


def _floats2(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covct", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="16-bit TIFF -> normalized 8-bit PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("segment", help="lung parenchyma mask, segmented and enlarged views")
    p.add_argument("input")
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("analyze", help="segment, classify and (for covid) build the ScoreCAM overlay")
    p.add_argument("input")
    p.add_argument("--model", help="model bundle (default: $COVCT_MODEL)")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    p.add_argument("--threads", type=int, default=DEFAULT_THREADS)
    p.add_argument("--blend", type=float, default=0.5)
    p.add_argument("--hue", type=float, default=0.0)
    p.add_argument("--colormap", default="bcyr")
    p.add_argument("--full-image", action="store_true", help="overlay on the whole CT instead of the lung mask")
    p.add_argument("--force-cam", action="store_true", help="build the heatmap even for no-covid predictions")
    p.add_argument("--out-prefix")
    p.add_argument("--json", help="report destination, '-' for stdout (default: <prefix>_report.json)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("metrics", help=f"metrics from a CSV with header {','.join(CSV_HEADER)}")
    p.add_argument("input")
    p.add_argument("--ci", action="store_true", help="add 90/95/99%% accuracy intervals")
    p.add_argument("--ci-n", type=_grid, help="observation counts for the intervals (default: row count)")
    p.add_argument("--out-prefix")
    p.add_argument("--json", help="metrics destination (default: stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="time forward passes and ScoreCAM over parameter grids")
    p.add_argument("--model", help="model bundle (default: $COVCT_MODEL)")
    p.add_argument("--input", help="square PNG to use (default: synthetic phantom)")
    p.add_argument("--threads-grid", type=_grid, default=[4, 6, 8])
    p.add_argument("--stride-grid", type=_grid, default=[1, 4])
    p.add_argument("--workers-grid", type=_grid, default=[1, 8])
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("make-model", help="write a seeded micro-network bundle")
    p.add_argument("output")
    p.add_argument("--maps", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--head-bias", type=_floats2, help="override the two head biases, e.g. 8,-8")
    p.set_defaults(func=cmd_make_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"covct {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"covct {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
