"""Dataset ingestion and result persistence.

Label maps travel as single-channel grayscale PNG (8 or 16 bit, pixel value
= instance id), predictions as UTF-8 JSON with flat row-major 784-length
mask arrays, and reports as CSV or markdown tables with 6-decimal floats.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import MASK_RES, BoundingBox, InstanceMap, InstancePrediction
from .metrics import AggregateMetrics, ImageMetrics, MetricSummary

PathLike = Union[str, Path]

MAX_PNG_LABEL = 0xFFFF


class LabelPngError(ValueError):
    """Base class for label-PNG read/write failures."""


class UnsupportedPngFormatError(LabelPngError):
    """The file decodes but is not single-channel 8/16-bit grayscale."""


class CorruptPngDataError(LabelPngError):
    """The stream is not decodable PNG data (truncated or not a PNG)."""


class LabelOverflowError(LabelPngError):
    """A label exceeds the 16-bit PNG range."""


class PredictionSchemaError(ValueError):
    """A prediction JSON document violates the interchange schema."""


@dataclass(frozen=True)
class DatasetPair:
    """One evaluation work item: ground-truth and prediction label maps."""

    image_id: str
    gt_path: Path
    pred_path: Path


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Parsed contents of one prediction JSON file."""

    canvas_w: int
    canvas_h: int
    instances: list[InstancePrediction]


def read_label_png(path: PathLike) -> InstanceMap:
    """Read a label map from a grayscale PNG; pixel value k is label k."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label image not found: {path}")
    try:
        with Image.open(path) as im:
            if (im.format or "").upper() != "PNG":
                raise UnsupportedPngFormatError(f"{path}: not a PNG file ({im.format})")
            if im.mode not in ("L", "I", "I;16"):
                raise UnsupportedPngFormatError(
                    f"{path}: expected single-channel grayscale PNG, got mode {im.mode}"
                )
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise CorruptPngDataError(f"{path}: not decodable as an image") from exc
    except OSError as exc:
        raise CorruptPngDataError(f"{path}: truncated or corrupt PNG data") from exc
    return InstanceMap(arr.astype(np.uint32))


def write_label_png(m: InstanceMap, path: PathLike) -> None:
    """Write a label map as a single-channel 16-bit grayscale PNG."""
    hi = int(m.labels.max(initial=0))
    if hi > MAX_PNG_LABEL:
        raise LabelOverflowError(
            f"label {hi} exceeds the 16-bit PNG range ({MAX_PNG_LABEL})"
        )
    Image.fromarray(m.labels.astype(np.uint16)).save(Path(path), format="PNG")


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise PredictionSchemaError(f"{where}: {msg}")


def _parse_instance(obj: object, where: str) -> InstancePrediction:
    _require(isinstance(obj, dict), where, "record must be an object")
    for key in ("id", "box", "s_cls", "mask_logits"):
        _require(key in obj, where, f"missing key '{key}'")
    box = obj["box"]
    _require(isinstance(box, dict), where, "'box' must be an object")
    for key in ("x", "y", "w", "h"):
        _require(key in box, where, f"box is missing '{key}'")
        _require(isinstance(box[key], int), where, f"box '{key}' must be an integer")
    logits = obj["mask_logits"]
    _require(isinstance(logits, list), where, "'mask_logits' must be an array")
    _require(
        len(logits) == MASK_RES * MASK_RES,
        where,
        f"mask_logits has {len(logits)} values, expected {MASK_RES * MASK_RES}",
    )
    s_qua = obj.get("s_qua")
    try:
        return InstancePrediction(
            box=BoundingBox(box["x"], box["y"], box["w"], box["h"]),
            mask_logits=np.asarray(logits, dtype=np.float64).reshape(MASK_RES, MASK_RES),
            s_cls=float(obj["s_cls"]),
            s_qua=None if s_qua is None else float(s_qua),
            id=obj["id"],
        )
    except (TypeError, ValueError) as exc:
        raise PredictionSchemaError(f"{where}: {exc}") from exc


def read_predictions_json(path: PathLike) -> PredictionSet:
    """Parse and validate one prediction file.

    Schema errors carry the offending record index in their message.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"prediction file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PredictionSchemaError(f"{path}: malformed JSON ({exc})") from exc
    _require(isinstance(doc, dict), str(path), "top level must be an object")
    canvas = doc.get("canvas")
    _require(isinstance(canvas, dict), str(path), "'canvas' must be an object")
    for key in ("width", "height"):
        _require(
            isinstance(canvas.get(key), int) and canvas[key] >= 1,
            str(path),
            f"canvas '{key}' must be a positive integer",
        )
    raw = doc.get("instances")
    _require(isinstance(raw, list), str(path), "'instances' must be an array")
    instances = []
    for i, obj in enumerate(raw):
        rec = _parse_instance(obj, f"{path}: instances[{i}]")
        _require(
            rec.box.within(canvas["width"], canvas["height"]),
            f"{path}: instances[{i}]",
            "box exceeds the canvas",
        )
        instances.append(rec)
    return PredictionSet(canvas["width"], canvas["height"], instances)


def write_predictions_json(ps: PredictionSet, path: PathLike) -> None:
    """Serialize predictions losslessly (floats keep full double precision)."""
    doc = {
        "canvas": {"width": ps.canvas_w, "height": ps.canvas_h},
        "instances": [
            {
                "id": p.id,
                "box": {"x": p.box.x, "y": p.box.y, "w": p.box.w, "h": p.box.h},
                "s_cls": p.s_cls,
                "s_qua": p.s_qua,
                "mask_logits": p.mask_logits.ravel().tolist(),
            }
            for p in ps.instances
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def pair_label_dirs(
    gt_dir: PathLike, pred_dir: PathLike
) -> tuple[list[DatasetPair], list[str], list[str]]:
    """Pair gt/pred PNGs by file stem.

    Returns (pairs sorted by image id, stems only in gt, stems only in pred).
    """
    gt = {p.stem: p for p in sorted(Path(gt_dir).glob("*.png"))}
    pred = {p.stem: p for p in sorted(Path(pred_dir).glob("*.png"))}
    pairs = [
        DatasetPair(stem, gt[stem], pred[stem]) for stem in sorted(gt.keys() & pred.keys())
    ]
    return pairs, sorted(set(gt) - set(pred)), sorted(set(pred) - set(gt))


_COLUMNS = ("aji", "dice", "f1", "pq", "dq", "sq", "sbd")


def _row_cells(m: ImageMetrics) -> list[str]:
    vals = [m.aji, m.dice, m.f1, m.pq.pq, m.pq.dq, m.pq.sq]
    cells = [f"{v:.6f}" for v in vals]
    cells.append("" if m.sbd is None else f"{m.sbd:.6f}")
    return cells


def _agg_cells(agg: AggregateMetrics, field: str) -> list[str]:
    cells = []
    for name in _COLUMNS:
        summary: Optional[MetricSummary] = getattr(agg, name)
        cells.append("" if summary is None else f"{getattr(summary, field):.6f}")
    return cells


def write_report(
    per_image: Sequence[tuple[str, ImageMetrics]],
    agg: AggregateMetrics,
    path: PathLike,
    format: str = "csv",
    sbd_skipped: int = 0,
) -> None:
    """Write the evaluation table: one row per image (sorted by id) followed
    by `mean` and `std` rows; the sbd column stays empty where not computed.

    A non-zero `sbd_skipped` appends a footer noting how many images were
    skipped for SBD. Output is byte-deterministic.
    """
    if not per_image:
        raise ValueError("report requires at least one image")
    if format not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {format!r}")
    rows = sorted(per_image, key=lambda it: it[0])
    header = ["image_id", *_COLUMNS]
    body = [[image_id, *_row_cells(m)] for image_id, m in rows]
    body.append(["mean", *_agg_cells(agg, "mean")])
    body.append(["std", *_agg_cells(agg, "std")])

    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        if sbd_skipped:
            writer.writerow([f"sbd skipped for {sbd_skipped} empty-map image(s)"] + [""] * 7)
        text = buf.getvalue()
    else:
        lines = [
            "| " + " | ".join(header) + " |",
            "|" + "|".join("---" for _ in header) + "|",
        ]
        lines += ["| " + " | ".join(cells) + " |" for cells in body]
        if sbd_skipped:
            lines.append("")
            lines.append(f"_SBD skipped for {sbd_skipped} empty-map image(s)._")
        text = "\n".join(lines) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="")
