"""Instance-level segmentation metrics over label maps.

AJI, object-level F1, panoptic quality (PQ/DQ/SQ), pixel-level Dice, and
(symmetric) best Dice, plus per-dataset mean/std aggregation. Every ratio is
formed in float64 from exact integer pixel counts; pixel counts are never
accumulated in floating point, so results are bit-reproducible.

Convention for degenerate inputs: when both maps are entirely background,
aji / object_f1 / panoptic_quality / pixel_dice all report a perfect score,
while best_dice and sbd raise (their per-instance mean is undefined).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DimensionMismatchError, InstanceMap, dice_pair


@dataclass(frozen=True)
class MatchCounts:
    """True/false positive and false negative detection counts."""

    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("match counts must be non-negative")


@dataclass(frozen=True)
class PqResult:
    pq: float
    dq: float
    sq: float
    counts: MatchCounts
    matched_iou_sum: float


@dataclass(frozen=True, eq=False)
class ImageMetrics:
    """Per-image metric values; sbd is present only when computed."""

    aji: float
    dice: float
    f1: float
    pq: PqResult
    sbd: Optional[float] = None

    def __post_init__(self):
        for name in ("aji", "dice", "f1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0, 1]: {v}")
        for name in ("pq", "dq", "sq"):
            v = getattr(self.pq, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0, 1]: {v}")
        if self.sbd is not None and not (0.0 <= self.sbd <= 1.0):
            raise ValueError(f"sbd out of [0, 1]: {self.sbd}")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    n_images: int

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError("summary requires at least one image")
        if self.std < 0.0:
            raise ValueError("std must be non-negative")


@dataclass(frozen=True)
class AggregateMetrics:
    """Dataset-level mean / population std per metric column."""

    aji: MetricSummary
    dice: MetricSummary
    f1: MetricSummary
    pq: MetricSummary
    dq: MetricSummary
    sq: MetricSummary
    sbd: Optional[MetricSummary] = None


class _PairTable:
    """Instance areas of both maps plus all nonzero pairwise intersections.

    Pairs are stored sorted by (a-label, b-label); `a_slice`/`b_view` expose
    per-instance candidate lists on either side.
    """

    def __init__(self, a: InstanceMap, b: InstanceMap):
        if a.labels.shape != b.labels.shape:
            raise DimensionMismatchError(
                f"label map dimensions differ: {a.labels.shape} vs {b.labels.shape}"
            )
        av = a.labels.ravel()
        bv = b.labels.ravel()
        self.a_ids, self.a_areas = np.unique(av[av != 0], return_counts=True)
        self.b_ids, self.b_areas = np.unique(bv[bv != 0], return_counts=True)
        both = (av != 0) & (bv != 0)
        keys = (av[both].astype(np.uint64) << np.uint64(32)) | bv[both].astype(np.uint64)
        uk, inter = np.unique(keys, return_counts=True)
        pair_a = (uk >> np.uint64(32)).astype(np.uint32)
        pair_b = (uk & np.uint64(0xFFFFFFFF)).astype(np.uint32)
        # indices into the sorted id arrays; uk order is (a asc, b asc)
        self.pair_ai = np.searchsorted(self.a_ids, pair_a)
        self.pair_bi = np.searchsorted(self.b_ids, pair_b)
        self.pair_inter = inter.astype(np.int64)
        self._a_starts = np.searchsorted(self.pair_ai, np.arange(self.a_ids.size + 1))
        self._b_order = np.lexsort((self.pair_ai, self.pair_bi))
        self._b_starts = np.searchsorted(
            self.pair_bi[self._b_order], np.arange(self.b_ids.size + 1)
        )

    @property
    def n_a(self) -> int:
        return int(self.a_ids.size)

    @property
    def n_b(self) -> int:
        return int(self.b_ids.size)

    def a_candidates(self, i: int):
        """(b indices, intersections) of instance i on the a side, b ascending."""
        lo, hi = self._a_starts[i], self._a_starts[i + 1]
        return self.pair_bi[lo:hi], self.pair_inter[lo:hi]

    def b_candidates(self, j: int):
        """(a indices, intersections) of instance j on the b side, a ascending."""
        sel = self._b_order[self._b_starts[j]:self._b_starts[j + 1]]
        return self.pair_ai[sel], self.pair_inter[sel]


def _aji_from(t: _PairTable) -> float:
    numerator = 0
    denominator = 0
    used = np.zeros(t.n_b, dtype=bool)
    a_areas = t.a_areas.astype(np.int64)
    b_areas = t.b_areas.astype(np.int64)
    for i in range(t.n_a):
        cand_b, cand_inter = t.a_candidates(i)
        best_j = -1
        best_iou = -1.0
        best_inter = 0
        for j, inter in zip(cand_b.tolist(), cand_inter.tolist()):
            if used[j]:
                continue
            pair_iou = inter / (int(a_areas[i]) + int(b_areas[j]) - inter)
            if pair_iou > best_iou:
                best_iou, best_j, best_inter = pair_iou, j, inter
        if best_j >= 0:
            used[best_j] = True
            numerator += best_inter
            denominator += int(a_areas[i]) + int(b_areas[best_j]) - best_inter
        else:
            denominator += int(a_areas[i])
    if t.n_b:
        denominator += int(b_areas[~used].sum())
    if denominator == 0:
        return 1.0  # both maps empty
    return numerator / denominator


def aji(gt: InstanceMap, pred: InstanceMap) -> float:
    """Aggregated Jaccard Index.

    Each ground-truth instance, visited in ascending label order, greedily
    takes the unused prediction of highest IoU among those intersecting it
    (ties go to the lower prediction label); unmatched ground truth adds its
    own area to the denominator and every unused prediction adds its area on
    top. Returns 1.0 when both maps are empty.
    """
    return _aji_from(_PairTable(gt, pred))


def _f1_from(
    t: _PairTable, order: Optional[Sequence[int]] = None
) -> tuple[float, MatchCounts]:
    if order is None:
        sequence = range(t.n_b)
    else:
        by_label = {int(lab): j for j, lab in enumerate(t.b_ids.tolist())}
        sequence = []
        seen = set()
        for lab in order:
            j = by_label.get(int(lab))
            if j is None:
                raise ValueError(f"order references unknown prediction label {lab}")
            if j in seen:
                raise ValueError(f"order lists prediction label {lab} twice")
            seen.add(j)
            sequence.append(j)
        if len(sequence) != t.n_b:
            raise ValueError("order must list every prediction label exactly once")
    claimed = np.zeros(t.n_a, dtype=bool)
    a_areas = t.a_areas.astype(np.int64)
    tp = 0
    for j in sequence:
        cand_a, cand_inter = t.b_candidates(j)
        best_i = -1
        best_inter = 0
        for i, inter in zip(cand_a.tolist(), cand_inter.tolist()):
            if claimed[i]:
                continue
            if inter > best_inter:  # strict > keeps the lower gt label on ties
                best_inter, best_i = inter, i
        # the claim only holds when the majority test passes
        if best_i >= 0 and 2 * best_inter > int(a_areas[best_i]):
            claimed[best_i] = True
            tp += 1
    fp = t.n_b - tp
    fn = t.n_a - tp
    counts = MatchCounts(tp=tp, fp=fp, fn=fn)
    if tp + fp + fn == 0:
        return 1.0, counts
    return 2 * tp / (fn + 2 * tp + fp), counts


def object_f1(
    gt: InstanceMap,
    pred: InstanceMap,
    order: Optional[Sequence[int]] = None,
) -> tuple[float, MatchCounts]:
    """Object-level F1 = 2TP / (FN + 2TP + FP).

    Predictions are processed in `order` (prediction labels, highest
    confidence first) or by ascending label when omitted. Each prediction
    tries to claim the unclaimed ground-truth instance it intersects most
    (ties to the lower gt label) and counts as TP only when the intersection
    exceeds half of that instance's area. Both maps empty scores 1.0.
    """
    return _f1_from(_PairTable(gt, pred), order)


def _pq_from(t: _PairTable) -> PqResult:
    if t.n_a == 0 and t.n_b == 0:
        return PqResult(1.0, 1.0, 1.0, MatchCounts(0, 0, 0), 0.0)
    a_areas = t.a_areas.astype(np.int64)
    b_areas = t.b_areas.astype(np.int64)
    inter = t.pair_inter
    union = a_areas[t.pair_ai] + b_areas[t.pair_bi] - inter
    matched = 2 * inter > union  # IoU > 0.5, decided in exact integers
    m_ai = t.pair_ai[matched]
    m_bi = t.pair_bi[matched]
    # IoU > 0.5 matches are one-to-one for non-overlapping instances
    assert np.unique(m_ai).size == m_ai.size and np.unique(m_bi).size == m_bi.size, (
        "panoptic matching produced a doubly-matched instance"
    )
    tp = int(m_ai.size)
    fp = t.n_b - tp
    fn = t.n_a - tp
    iou_sum = float(np.sum(inter[matched] / union[matched])) if tp else 0.0
    dq = 2 * tp / (2 * tp + fp + fn)
    sq = iou_sum / tp if tp else 0.0
    return PqResult(dq * sq, dq, sq, MatchCounts(tp, fp, fn), iou_sum)


def panoptic_quality(gt: InstanceMap, pred: InstanceMap) -> PqResult:
    """Panoptic quality: DQ (detections at IoU > 0.5) times SQ (mean matched
    IoU). Both maps empty scores 1.0 across the board."""
    return _pq_from(_PairTable(gt, pred))


def pixel_dice(gt: InstanceMap, pred: InstanceMap) -> float:
    """Dice between the binarized foregrounds; 1.0 when both maps are empty."""
    if gt.labels.shape != pred.labels.shape:
        raise DimensionMismatchError(
            f"label map dimensions differ: {gt.labels.shape} vs {pred.labels.shape}"
        )
    a = gt.foreground()
    b = pred.foreground()
    if a.pixel_count == 0 and b.pixel_count == 0:
        return 1.0
    return dice_pair(a, b)


def _bd_a_over_b(t: _PairTable) -> float:
    """Mean over a-side instances of the best Dice against any b instance."""
    a_areas = t.a_areas.astype(np.int64)
    b_areas = t.b_areas.astype(np.int64)
    total = 0.0
    for i in range(t.n_a):
        cand_b, cand_inter = t.a_candidates(i)
        best = 0.0
        for j, inter in zip(cand_b.tolist(), cand_inter.tolist()):
            d = 2.0 * inter / (int(a_areas[i]) + int(b_areas[j]))
            if d > best:
                best = d
        total += best
    return total / t.n_a


def _bd_b_over_a(t: _PairTable) -> float:
    b_areas = t.b_areas.astype(np.int64)
    a_areas = t.a_areas.astype(np.int64)
    total = 0.0
    for j in range(t.n_b):
        cand_a, cand_inter = t.b_candidates(j)
        best = 0.0
        for i, inter in zip(cand_a.tolist(), cand_inter.tolist()):
            d = 2.0 * inter / (int(b_areas[j]) + int(a_areas[i]))
            if d > best:
                best = d
        total += best
    return total / t.n_b


def best_dice(p: InstanceMap, t: InstanceMap) -> float:
    """Mean over p's instances of the best Dice against any instance of t."""
    table = _PairTable(p, t)
    if table.n_a == 0:
        raise ValueError("best_dice requires at least one instance in the first map")
    return _bd_a_over_b(table)


def sbd(p: InstanceMap, t: InstanceMap) -> float:
    """Symmetric best Dice: min(BD(p, t), BD(t, p))."""
    table = _PairTable(p, t)
    if table.n_a == 0 or table.n_b == 0:
        raise ValueError("sbd requires at least one instance in each map")
    return min(_bd_a_over_b(table), _bd_b_over_a(table))


def compute_image_metrics(
    gt: InstanceMap, pred: InstanceMap, with_sbd: bool = False
) -> ImageMetrics:
    """All per-image metrics from a single overlap scan.

    Results are identical to calling each metric on its own. With
    `with_sbd`, SBD is computed only when both maps have at least one
    instance and stays None otherwise.
    """
    t = _PairTable(gt, pred)
    sbd_value = None
    if with_sbd and t.n_a > 0 and t.n_b > 0:
        # table sides are (gt, pred); BD(pred over gt) walks the b side
        sbd_value = min(_bd_b_over_a(t), _bd_a_over_b(t))
    f1, _counts = _f1_from(t)
    return ImageMetrics(
        aji=_aji_from(t),
        dice=pixel_dice(gt, pred),
        f1=f1,
        pq=_pq_from(t),
        sbd=sbd_value,
    )


def aggregate(values: Sequence[ImageMetrics]) -> AggregateMetrics:
    """Arithmetic mean and population standard deviation per metric column.

    SBD aggregates over the subset of images that carry one; the column is
    absent when no image does.
    """
    if not values:
        raise ValueError("aggregate requires at least one image")

    def summarize(xs: Sequence[float]) -> MetricSummary:
        arr = np.asarray(xs, dtype=np.float64)
        return MetricSummary(float(arr.mean()), float(arr.std()), int(arr.size))

    sbd_vals = [v.sbd for v in values if v.sbd is not None]
    return AggregateMetrics(
        aji=summarize([v.aji for v in values]),
        dice=summarize([v.dice for v in values]),
        f1=summarize([v.f1 for v in values]),
        pq=summarize([v.pq.pq for v in values]),
        dq=summarize([v.pq.dq for v in values]),
        sq=summarize([v.pq.sq for v in values]),
        sbd=summarize(sbd_vals) if sbd_vals else None,
    )
