"""Test-time fusion pipeline: score filtering, confidence re-weighting,
ROI-mask pasting, and overlap resolution into a final label map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bilinear import resize_bilinear  # noqa: F401  (re-exported pipeline op)
from .core import BinaryMask, DimensionMismatchError, InstanceMap, InstancePrediction
from .fusion import confidence, sigmoid_map


@dataclass(frozen=True)
class InferenceConfig:
    """beta filters detections on their classification score; bin_thresh
    binarizes pasted mask probabilities (strictly greater-than)."""

    beta: float = 0.5
    bin_thresh: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not (0.0 < self.bin_thresh < 1.0):
            raise ValueError(f"bin_thresh must be in (0, 1), got {self.bin_thresh}")


@dataclass(frozen=True, eq=False)
class ScoredMask:
    """A pasted full-canvas mask competing for pixels with its confidence."""

    mask: BinaryMask
    s_conf: float
    id: int

    def __post_init__(self):
        if self.mask.pixel_count == 0:
            raise ValueError("scored masks must be non-empty")
        if not (0.0 <= self.s_conf <= 1.0):
            raise ValueError(f"s_conf must be in [0, 1], got {self.s_conf}")
        if not isinstance(self.id, (int, np.integer)) or int(self.id) < 1:
            raise ValueError(f"mask id must be an integer >= 1, got {self.id!r}")
        object.__setattr__(self, "id", int(self.id))


def paste_mask(
    pred: InstancePrediction, canvas_w: int, canvas_h: int, cfg: InferenceConfig
) -> BinaryMask:
    """Paste one prediction onto the canvas.

    The 28x28 logits are squashed with the sigmoid, resized to the box with
    bilinear interpolation, binarized at cfg.bin_thresh (strict >), and set
    into an otherwise empty canvas-size mask.
    """
    if not pred.box.within(canvas_w, canvas_h):
        raise ValueError(
            f"box x={pred.box.x} y={pred.box.y} w={pred.box.w} h={pred.box.h} "
            f"exceeds the {canvas_w}x{canvas_h} canvas"
        )
    probs = sigmoid_map(pred.mask_logits)
    patch = resize_bilinear(probs, pred.box.w, pred.box.h)
    bits = np.zeros((canvas_h, canvas_w), dtype=bool)
    rs, cs = pred.box.slices()
    bits[rs, cs] = patch > cfg.bin_thresh
    return BinaryMask(bits)


def filter_by_score(
    preds: list[InstancePrediction], cfg: InferenceConfig
) -> list[InstancePrediction]:
    """Drop predictions whose classification score is below beta (strictly),
    preserving input order."""
    return [p for p in preds if p.s_cls >= cfg.beta]


def resolve_overlaps(masks: list[ScoredMask]) -> InstanceMap:
    """Assign every contested pixel to the claimant with the highest
    confidence (ties to the lower id); output labels are the mask ids.

    Masks fully occluded by higher-confidence ones vanish from the output.
    The list must be non-empty (the canvas size is taken from the masks) and
    ids must be unique.
    """
    if not masks:
        raise ValueError("resolve_overlaps needs at least one mask")
    shape = masks[0].mask.bits.shape
    ids = set()
    for m in masks:
        if m.mask.bits.shape != shape:
            raise DimensionMismatchError(
                f"mask dimensions differ: {shape} vs {m.mask.bits.shape}"
            )
        if m.id in ids:
            raise ValueError(f"duplicate mask id {m.id}")
        ids.add(m.id)
    out = np.zeros(shape, dtype=np.uint32)
    # paint lowest priority first so higher-confidence masks overwrite;
    # equal confidence paints the lower id last, making it win
    for m in sorted(masks, key=lambda m: (m.s_conf, -m.id)):
        out[m.mask.bits] = m.id
    return InstanceMap(out)


def run_inference_fusion(
    preds: list[InstancePrediction],
    canvas_w: int,
    canvas_h: int,
    cfg: InferenceConfig = InferenceConfig(),
) -> InstanceMap:
    """Full pipeline: beta filter, confidence re-weighting (missing quality
    scores count as 1), mask pasting, empty-mask dropping, and overlap
    resolution. Deterministic and invariant to input-list order; prediction
    ids must be unique as they become the output labels."""
    seen = set()
    for p in preds:
        if p.id in seen:
            raise ValueError(f"duplicate prediction id {p.id}")
        seen.add(p.id)
    scored = []
    for p in filter_by_score(preds, cfg):
        s_conf = confidence(p.s_cls, 1.0 if p.s_qua is None else p.s_qua)
        mask = paste_mask(p, canvas_w, canvas_h, cfg)
        if mask.pixel_count == 0:
            continue
        scored.append(ScoredMask(mask=mask, s_conf=s_conf, id=p.id))
    if not scored:
        return InstanceMap.zeros(canvas_w, canvas_h)
    return resolve_overlaps(scored)
