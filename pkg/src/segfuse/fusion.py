"""Panoptic fusion arithmetic: residual attention feature fusion, mask
quality scoring, confidence re-weighting, semantic consistency loss, and
total-loss aggregation.

These are the pure numerical mechanisms; no trainable layers live here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bilinear import resize_adjoint, resize_bilinear
from .core import (
    MASK_RES,
    BinaryMask,
    BoundingBox,
    DimensionMismatchError,
    FeatureMap,
    _freeze,
)


@dataclass(frozen=True, eq=False)
class RoiPrediction:
    """A detected region: box plus the 28x28 foreground mask logits."""

    box: BoundingBox
    mask_logits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask_logits, dtype=np.float64)
        if arr.shape != (MASK_RES, MASK_RES):
            raise ValueError(
                f"mask_logits must be {MASK_RES}x{MASK_RES}, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("mask_logits contains non-finite values")
        object.__setattr__(self, "mask_logits", _freeze(arr, np.float64))


@dataclass(frozen=True)
class LossComponents:
    """Scalar loss terms feeding the total-loss aggregation."""

    rpn_obj: float = 0.0
    rpn_reg: float = 0.0
    det_cls: float = 0.0
    det_reg: float = 0.0
    det_mask: float = 0.0
    det_qua: float = 0.0
    semseg1: float = 0.0
    semseg2: float = 0.0
    sem_cons: float = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"loss component {name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights: alpha1 scales the two semantic segmentation terms,
    alpha2 the consistency term. Defaults are 0.1 and 1.0."""

    alpha1: float = 0.1
    alpha2: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


def sigmoid_map(logits: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, numerically stable on both tails."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("sigmoid_map requires finite inputs")
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_box_in(box: BoundingBox, width: int, height: int) -> None:
    if not box.within(width, height):
        raise ValueError(
            f"box x={box.x} y={box.y} w={box.w} h={box.h} exceeds the "
            f"{width}x{height} extent"
        )


def raff(f0: FeatureMap, rois: list[RoiPrediction]) -> FeatureMap:
    """Residual attention feature fusion.

    Sequentially, for each ROI, the current feature values inside its box
    are multiplied by ``1 + P`` where ``P`` is the sigmoid of the ROI's mask
    logits resized to the box with bilinear interpolation; the same 2-D
    attention factor applies to every channel. Pixels outside every box are
    returned untouched, and an empty ROI list returns `f0` itself. ROI order
    matters wherever boxes overlap.
    """
    if not rois:
        return f0
    working = f0.values.copy()
    for roi in rois:
        _check_box_in(roi.box, f0.width, f0.height)
        attention = resize_bilinear(sigmoid_map(roi.mask_logits), roi.box.w, roi.box.h)
        rs, cs = roi.box.slices()
        working[:, rs, cs] *= 1.0 + attention[None, :, :]
    return FeatureMap(working)


def raff_attention_grad(
    f0: FeatureMap, roi: RoiPrediction, upstream: FeatureMap
) -> np.ndarray:
    """Gradient of ``sum(upstream * raff(f0, [roi]))`` w.r.t. the mask logits.

    Composes the bilinear-resize adjoint with the sigmoid derivative;
    returns a 28x28 grid.
    """
    if upstream.values.shape != f0.values.shape:
        raise DimensionMismatchError(
            f"upstream shape {upstream.values.shape} differs from feature shape "
            f"{f0.values.shape}"
        )
    _check_box_in(roi.box, f0.width, f0.height)
    rs, cs = roi.box.slices()
    # d(loss)/d(attention) is channel-summed because attention is broadcast
    d_attention = np.sum(upstream.values[:, rs, cs] * f0.values[:, rs, cs], axis=0)
    d_probs = resize_adjoint(d_attention, MASK_RES, MASK_RES)
    probs = sigmoid_map(roi.mask_logits)
    return d_probs * probs * (1.0 - probs)


def mask_quality_target(mp: BinaryMask, mt: BinaryMask) -> float:
    """Mask quality score: the average of Dice and IoU between a predicted
    mask and its ground truth, from exact pixel counts."""
    if mp.bits.shape != mt.bits.shape:
        raise DimensionMismatchError(
            f"mask dimensions differ: {mp.bits.shape} vs {mt.bits.shape}"
        )
    np_, nt = mp.pixel_count, mt.pixel_count
    if np_ + nt == 0:
        raise ValueError("mask quality is undefined when both masks are empty")
    inter = int(np.count_nonzero(mp.bits & mt.bits))
    union = np_ + nt - inter
    return (2.0 * inter / (np_ + nt) + inter / union) * 0.5


def confidence(s_cls: float, s_qua: float) -> float:
    """Inference confidence: classification score times quality score."""
    for name, v in (("s_cls", s_cls), ("s_qua", s_qua)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    return s_cls * s_qua


def _as_prob_grid(name: str, grid: np.ndarray) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def consistency_loss(p_sem: np.ndarray, p_ins: np.ndarray) -> float:
    """Mean squared difference between the two semantic probability maps."""
    a = _as_prob_grid("p_sem", p_sem)
    b = _as_prob_grid("p_ins", p_ins)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"grid shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def consistency_loss_grad(p_sem: np.ndarray, p_ins: np.ndarray) -> np.ndarray:
    """Gradient of consistency_loss w.r.t. p_ins: 2 (p_ins - p_sem) / N."""
    a = _as_prob_grid("p_sem", p_sem)
    b = _as_prob_grid("p_ins", p_ins)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"grid shapes differ: {a.shape} vs {b.shape}")
    return 2.0 * (b - a) / a.size


def total_loss(c: LossComponents, w: LossWeights = LossWeights()) -> float:
    """Weighted sum of all loss terms: the six instance-branch terms plus
    alpha1 * (semseg1 + semseg2) plus alpha2 * sem_cons."""
    return (
        c.rpn_obj
        + c.rpn_reg
        + c.det_cls
        + c.det_reg
        + c.det_mask
        + c.det_qua
        + w.alpha1 * (c.semseg1 + c.semseg2)
        + w.alpha2 * c.sem_cons
    )


def quality_input_fusion(roi_features: FeatureMap, mask_logits: np.ndarray) -> FeatureMap:
    """Assemble the quality-branch input: 256x14x14 ROI features concatenated
    with the foreground 28x28 score map rearranged to 4x14x14.

    The rearrangement is space-to-depth: each 2x2 block of the score map
    becomes the 4 extra channel values at the corresponding 14x14 location
    (row-major within the block). Channel 1 of `mask_logits` is the
    foreground plane.
    """
    if roi_features.values.shape != (256, 14, 14):
        raise DimensionMismatchError(
            f"roi_features must be 256x14x14, got {roi_features.values.shape}"
        )
    logits = np.asarray(mask_logits, dtype=np.float64)
    if logits.shape != (2, MASK_RES, MASK_RES):
        raise DimensionMismatchError(
            f"mask_logits must be 2x{MASK_RES}x{MASK_RES}, got {logits.shape}"
        )
    if not np.isfinite(logits).all():
        raise ValueError("mask_logits contains non-finite values")
    fg = logits[1]
    blocks = np.stack(
        [fg[0::2, 0::2], fg[0::2, 1::2], fg[1::2, 0::2], fg[1::2, 1::2]]
    )
    return FeatureMap(np.concatenate([roi_features.values, blocks], axis=0))
