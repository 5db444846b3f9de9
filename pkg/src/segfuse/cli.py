"""Batch command-line front end.

Subcommands:
  evaluate   score prediction label maps against ground truth, write a report
  fuse       turn prediction JSON files into label PNGs via the fusion pipeline
  selftest   run the built-in oracle and gradient checks

Exit codes: 0 success, 1 selftest failure, 2 pairing problem,
3 I/O or data error, 4 prediction schema violation.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .inference import InferenceConfig, run_inference_fusion
from .io_formats import (
    LabelPngError,
    PredictionSchemaError,
    pair_label_dirs,
    read_label_png,
    read_predictions_json,
    write_label_png,
    write_report,
)
from .metrics import aggregate, compute_image_metrics
from .selftest import run_all_checks

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_PAIRING = 2
EXIT_IO = 3
EXIT_SCHEMA = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segfuse",
        description="Instance-segmentation evaluation and panoptic mask fusion.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    ev = sub.add_parser("evaluate", help="score predicted label maps against ground truth")
    ev.add_argument("--gt", required=True, help="directory of ground-truth label PNGs")
    ev.add_argument("--pred", required=True, help="directory of predicted label PNGs")
    ev.add_argument("--out", required=True, help="report file to write")
    ev.add_argument("--format", choices=("csv", "markdown"), default="csv")
    ev.add_argument("--with-sbd", action="store_true", help="also compute symmetric best dice")
    ev.add_argument("--jobs", type=int, default=1, help="parallel workers across images")

    fu = sub.add_parser("fuse", help="fuse prediction JSON files into label PNGs")
    fu.add_argument("--pred", required=True, help="directory of prediction JSON files")
    fu.add_argument("--out", required=True, help="directory for the fused label PNGs")
    fu.add_argument("--beta", type=float, default=0.5, help="classification-score threshold")
    fu.add_argument("--bin-thresh", type=float, default=0.5, help="mask binarization threshold")
    fu.add_argument("--width", type=int, default=None, help="override canvas width")
    fu.add_argument("--height", type=int, default=None, help="override canvas height")

    sub.add_parser("selftest", help="run built-in numerical checks")
    return parser


def _evaluate_one(item):
    image_id, gt_path, pred_path, with_sbd = item
    gt = read_label_png(gt_path)
    pred = read_label_png(pred_path)
    return image_id, compute_image_metrics(gt, pred, with_sbd=with_sbd)


def _run_evaluate(args) -> int:
    pairs, gt_only, pred_only = pair_label_dirs(args.gt, args.pred)
    if gt_only or pred_only:
        for stem in gt_only:
            print(f"error: no prediction for ground-truth stem '{stem}'", file=sys.stderr)
        for stem in pred_only:
            print(f"error: no ground truth for prediction stem '{stem}'", file=sys.stderr)
        return EXIT_PAIRING
    if not pairs:
        print("error: no image pairs found", file=sys.stderr)
        return EXIT_PAIRING

    work = [(p.image_id, p.gt_path, p.pred_path, args.with_sbd) for p in pairs]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_evaluate_one, work))
        else:
            results = [_evaluate_one(item) for item in work]
    except (OSError, LabelPngError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    results.sort(key=lambda it: it[0])
    per_image = [(image_id, m) for image_id, m in results]
    skipped = sum(1 for _, m in per_image if args.with_sbd and m.sbd is None)
    try:
        write_report(
            per_image,
            aggregate([m for _, m in per_image]),
            args.out,
            format=args.format,
            sbd_skipped=skipped,
        )
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _run_fuse(args) -> int:
    if (args.width is None) != (args.height is None):
        print("error: --width and --height must be given together", file=sys.stderr)
        return EXIT_IO
    pred_dir = Path(args.pred)
    files = sorted(pred_dir.glob("*.json"))
    if not files:
        print(f"error: no prediction JSON files in {pred_dir}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = InferenceConfig(beta=args.beta, bin_thresh=args.bin_thresh)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in files:
        try:
            ps = read_predictions_json(path)
        except PredictionSchemaError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        width = args.width if args.width is not None else ps.canvas_w
        height = args.height if args.height is not None else ps.canvas_h
        try:
            fused = run_inference_fusion(ps.instances, width, height, cfg)
            write_label_png(fused, out_dir / f"{path.stem}.png")
        except (ValueError, OSError) as exc:
            print(f"error: {path.name}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def _run_selftest() -> int:
    checks = run_all_checks()
    name_width = max(len(c.name) for c in checks)
    failed = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        failed += 0 if c.passed else 1
        print(f"{c.name:<{name_width}}  error={c.error:<12.3e} tol={c.tolerance:<9.1e} {status}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST_FAILED


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.subcommand == "evaluate":
        return _run_evaluate(args)
    if args.subcommand == "fuse":
        return _run_fuse(args)
    return _run_selftest()


if __name__ == "__main__":
    sys.exit(main())
