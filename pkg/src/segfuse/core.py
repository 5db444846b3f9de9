"""Shared data model: label maps, binary masks, boxes, predictions, feature grids.

All types are immutable after construction: array payloads are copied in and
frozen, so values can be shared freely between threads. Coordinates are
row-major with the origin at the top-left; a box anchors at its minimum
column / minimum row and covers the half-open window
``[x, x+w) x [y, y+h)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# ROI mask resolution of the detection head (foreground channel).
MASK_RES = 28

# Largest admissible instance label (32-bit storage; PNG export caps at 65535).
MAX_LABEL = 0xFFFFFFFF


class DimensionMismatchError(ValueError):
    """Two grids that must share dimensions do not."""


def _freeze(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class InstanceMap:
    """H x W grid of instance labels; 0 is background, each k >= 1 one object.

    Labels need not be contiguous. The grid is stored as read-only uint32.
    """

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"label map must be 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"label map must have an integer dtype, got {arr.dtype}")
        if arr.size:
            lo, hi = int(arr.min()), int(arr.max())
            if lo < 0:
                raise ValueError("label map contains negative labels")
            if hi > MAX_LABEL:
                raise ValueError(f"label {hi} exceeds the 32-bit label range")
        object.__setattr__(self, "labels", _freeze(arr, np.uint32))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "InstanceMap":
        return cls(np.zeros((height, width), dtype=np.uint32))

    def instance_labels(self) -> np.ndarray:
        """Distinct nonzero labels in ascending order."""
        flat = self.labels[self.labels != 0]
        return np.unique(flat).astype(np.int64)

    def foreground(self) -> "BinaryMask":
        return BinaryMask(self.labels != 0)

    def instance_mask(self, label: int) -> "BinaryMask":
        return BinaryMask(self.labels == label)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W boolean foreground mask."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            if not (np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_):
                raise ValueError(f"mask must be boolean or integer 0/1, got {arr.dtype}")
            arr = arr != 0
        object.__setattr__(self, "bits", _freeze(arr, np.bool_))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def pixel_count(self) -> int:
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box anchored at (min column, min row), size w x h pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"box field {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must be at least 1x1, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box anchor must be non-negative, got ({self.x}, {self.y})")

    def within(self, canvas_w: int, canvas_h: int) -> bool:
        return self.x + self.w <= canvas_w and self.y + self.h <= canvas_h

    def slices(self):
        """(row slice, column slice) of the covered window."""
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(frozen=True, eq=False)
class InstancePrediction:
    """One detected object: box, 28x28 foreground mask logits, and scores."""

    box: BoundingBox
    mask_logits: np.ndarray
    s_cls: float
    s_qua: Optional[float] = None
    id: int = 1

    def __post_init__(self):
        arr = np.asarray(self.mask_logits, dtype=np.float64)
        if arr.shape != (MASK_RES, MASK_RES):
            raise ValueError(
                f"mask_logits must be {MASK_RES}x{MASK_RES}, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("mask_logits contains non-finite values")
        object.__setattr__(self, "mask_logits", _freeze(arr, np.float64))
        s = float(self.s_cls)
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"s_cls must be in [0, 1], got {s}")
        object.__setattr__(self, "s_cls", s)
        if self.s_qua is not None:
            q = float(self.s_qua)
            if not (0.0 <= q <= 1.0):
                raise ValueError(f"s_qua must be in [0, 1], got {q}")
            object.__setattr__(self, "s_qua", q)
        if not isinstance(self.id, (int, np.integer)) or int(self.id) < 1:
            raise ValueError(f"prediction id must be an integer >= 1, got {self.id!r}")
        object.__setattr__(self, "id", int(self.id))


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """C x H x W real-valued feature grid; all values finite."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be C x H x W, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "values", _freeze(arr, np.float64))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def extract_instances(m: InstanceMap) -> list[tuple[int, int, BoundingBox]]:
    """Enumerate the instances of a label map.

    Returns one ``(label, pixel_count, bbox)`` triple per distinct nonzero
    label, sorted by ascending label; the bbox is the tight axis-aligned
    bound of the instance's pixels.
    """
    ys, xs = np.nonzero(m.labels)
    if ys.size == 0:
        return []
    labs = m.labels[ys, xs]
    order = np.argsort(labs, kind="stable")
    labs, ys, xs = labs[order], ys[order], xs[order]
    uniq, starts = np.unique(labs, return_index=True)
    counts = np.diff(np.append(starts, labs.size))
    x0 = np.minimum.reduceat(xs, starts)
    x1 = np.maximum.reduceat(xs, starts)
    y0 = np.minimum.reduceat(ys, starts)
    y1 = np.maximum.reduceat(ys, starts)
    return [
        (
            int(uniq[i]),
            int(counts[i]),
            BoundingBox(int(x0[i]), int(y0[i]), int(x1[i] - x0[i] + 1), int(y1[i] - y0[i] + 1)),
        )
        for i in range(uniq.size)
    ]


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatchError(
            f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}"
        )


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two equal-size masks; 0.0 when both empty."""
    _check_same_shape(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = a.pixel_count + b.pixel_count - inter
    if union == 0:
        return 0.0
    return inter / union


def dice_pair(a: BinaryMask, b: BinaryMask) -> float:
    """Dice coefficient 2|a&b| / (|a|+|b|) of two masks; 0.0 when both empty."""
    _check_same_shape(a, b)
    inter = int(np.count_nonzero(a.bits & b.bits))
    total = a.pixel_count + b.pixel_count
    if total == 0:
        return 0.0
    return 2.0 * inter / total
