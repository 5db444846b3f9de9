"""Built-in numerical verification: brute-force metric oracles, gradient
checks against central finite differences, and the fusion invariants.

The oracles here deliberately avoid the fast implementations: they walk
instance masks pixel by pixel, exactly as the metric definitions read, so
the CLI selftest (and the test suite) can compare two independent routes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bilinear import resize_bilinear
from .core import BoundingBox, FeatureMap, InstanceMap
from .fusion import (
    RoiPrediction,
    consistency_loss,
    consistency_loss_grad,
    raff,
    raff_attention_grad,
)
from .metrics import MatchCounts, aji, object_f1, panoptic_quality


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def brute_force_aji(gt: InstanceMap, pred: InstanceMap) -> float:
    """Literal AJI: per ground-truth instance, argmax-IoU over unused
    predictions (ascending label, strict improvement keeps the lower label),
    with unused prediction areas appended to the denominator."""
    gt_ids = [int(v) for v in gt.instance_labels()]
    pred_ids = [int(v) for v in pred.instance_labels()]
    used: set[int] = set()
    numerator = 0
    denominator = 0
    for g in gt_ids:
        gmask = gt.labels == g
        garea = int(np.count_nonzero(gmask))
        best_iou = -1.0
        best_p = None
        best_inter = 0
        for p in pred_ids:
            if p in used:
                continue
            pmask = pred.labels == p
            inter = int(np.count_nonzero(gmask & pmask))
            if inter == 0:
                continue
            union = garea + int(np.count_nonzero(pmask)) - inter
            pair_iou = inter / union
            if pair_iou > best_iou:
                best_iou, best_p, best_inter = pair_iou, p, inter
        if best_p is None:
            denominator += garea
        else:
            used.add(best_p)
            parea = int(np.count_nonzero(pred.labels == best_p))
            numerator += best_inter
            denominator += garea + parea - best_inter
    for p in pred_ids:
        if p not in used:
            denominator += int(np.count_nonzero(pred.labels == p))
    if denominator == 0:
        return 1.0
    return numerator / denominator


def brute_force_pq(gt: InstanceMap, pred: InstanceMap):
    """Literal PQ matcher: every (gt, pred) pair with IoU > 0.5 is a true
    positive. Returns (pq, dq, sq, counts)."""
    gt_ids = [int(v) for v in gt.instance_labels()]
    pred_ids = [int(v) for v in pred.instance_labels()]
    if not gt_ids and not pred_ids:
        return 1.0, 1.0, 1.0, MatchCounts(0, 0, 0)
    tp = 0
    iou_sum = 0.0
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for g in gt_ids:
        gmask = gt.labels == g
        garea = int(np.count_nonzero(gmask))
        for p in pred_ids:
            pmask = pred.labels == p
            inter = int(np.count_nonzero(gmask & pmask))
            if inter == 0:
                continue
            union = garea + int(np.count_nonzero(pmask)) - inter
            if inter / union > 0.5:
                assert g not in matched_gt and p not in matched_pred
                matched_gt.add(g)
                matched_pred.add(p)
                tp += 1
                iou_sum += inter / union
    fp = len(pred_ids) - tp
    fn = len(gt_ids) - tp
    dq = 2 * tp / (2 * tp + fp + fn)
    sq = iou_sum / tp if tp else 0.0
    return dq * sq, dq, sq, MatchCounts(tp, fp, fn)


def brute_force_f1(
    gt: InstanceMap, pred: InstanceMap, order: Optional[list[int]] = None
) -> tuple[float, MatchCounts]:
    """Literal object-F1: sequential claiming with the >50 percent rule."""
    gt_ids = [int(v) for v in gt.instance_labels()]
    pred_ids = order if order is not None else [int(v) for v in pred.instance_labels()]
    claimed: set[int] = set()
    tp = 0
    for p in pred_ids:
        pmask = pred.labels == p
        best_g = None
        best_inter = 0
        for g in gt_ids:
            if g in claimed:
                continue
            inter = int(np.count_nonzero(pmask & (gt.labels == g)))
            if inter > best_inter:
                best_inter, best_g = inter, g
        if best_g is not None and 2 * best_inter > int(
            np.count_nonzero(gt.labels == best_g)
        ):
            claimed.add(best_g)
            tp += 1
    fp = len(pred_ids) - tp
    fn = len(gt_ids) - tp
    if tp + fp + fn == 0:
        return 1.0, MatchCounts(0, 0, 0)
    return 2 * tp / (fn + 2 * tp + fp), MatchCounts(tp, fp, fn)


def random_instance_map(
    rng: np.random.Generator, width: int, height: int, max_instances: int
) -> InstanceMap:
    """Random label map made of overlapping painted rectangles (later labels
    overwrite earlier ones, so some may shrink or vanish)."""
    labels = np.zeros((height, width), dtype=np.uint32)
    n = int(rng.integers(0, max_instances + 1))
    for k in range(1, n + 1):
        w = int(rng.integers(1, max(2, width // 2)))
        h = int(rng.integers(1, max(2, height // 2)))
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        labels[y:y + h, x:x + w] = k
    return InstanceMap(labels)


# ---------------------------------------------------------------------------
# gradient checks
# ---------------------------------------------------------------------------

def finite_difference_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a
    time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] = x[idx] + h
        xm = x.copy()
        xm[idx] = x[idx] - h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return grad


def _relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(reference))), 1e-12)
    return float(np.max(np.abs(analytic - reference))) / scale


def consistency_grad_error(rng: np.random.Generator, trials: int = 20) -> float:
    """Worst relative error of the analytic consistency-loss gradient across
    random probability grids."""
    worst = 0.0
    for _ in range(trials):
        p_sem = rng.uniform(0.05, 0.95, size=(4, 4))
        p_ins = rng.uniform(0.05, 0.95, size=(4, 4))
        analytic = consistency_loss_grad(p_sem, p_ins)
        fd = finite_difference_grad(lambda x: consistency_loss(p_sem, x), p_ins)
        worst = max(worst, _relative_error(analytic, fd))
    return worst


def raff_grad_error(rng: np.random.Generator, trials: int = 20) -> float:
    """Worst relative error of the analytic single-ROI attention gradient."""
    worst = 0.0
    for _ in range(trials):
        f0 = FeatureMap(rng.normal(size=(3, 8, 8)))
        upstream = FeatureMap(rng.normal(size=(3, 8, 8)))
        w = int(rng.integers(2, 9))
        h = int(rng.integers(2, 9))
        x = int(rng.integers(0, 8 - w + 1))
        y = int(rng.integers(0, 8 - h + 1))
        box = BoundingBox(x, y, w, h)
        logits = rng.normal(scale=2.0, size=(28, 28))
        analytic = raff_attention_grad(f0, RoiPrediction(box, logits), upstream)

        def objective(m):
            fused = raff(f0, [RoiPrediction(box, m)])
            return float(np.sum(upstream.values * fused.values))

        fd = finite_difference_grad(objective, logits)
        worst = max(worst, _relative_error(analytic, fd))
    return worst


# ---------------------------------------------------------------------------
# check suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _metric_oracle_errors(seed: int, n_pairs: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst_aji = 0.0
    worst_pq = 0.0
    for _ in range(n_pairs):
        gt = random_instance_map(rng, 32, 32, 6)
        pred = random_instance_map(rng, 32, 32, 6)
        worst_aji = max(worst_aji, abs(aji(gt, pred) - brute_force_aji(gt, pred)))
        got = panoptic_quality(gt, pred)
        pq, dq, sq, counts = brute_force_pq(gt, pred)
        worst_pq = max(
            worst_pq,
            abs(got.pq - pq),
            abs(got.dq - dq),
            abs(got.sq - sq),
            float(got.counts != counts),
        )
    return worst_aji, worst_pq


def _fixture_error() -> float:
    """Worst deviation across the hand-computed metric fixtures."""
    gt = np.zeros((8, 8), dtype=np.uint32)
    gt[0:2, 0:2] = 1
    gt[4:6, 4:6] = 2
    pred = np.zeros((8, 8), dtype=np.uint32)
    pred[0:2, 0:2] = 1
    pred[4:6, 5:7] = 2
    pred[7, 0] = 3
    err = abs(aji(InstanceMap(gt), InstanceMap(pred)) - 6.0 / 11.0)

    f1, counts = object_f1(InstanceMap(gt), InstanceMap(pred))
    err = max(err, abs(f1 - 0.5), float(counts != MatchCounts(1, 1, 1)))

    loss = consistency_loss(
        np.array([[0.2, 0.4], [0.6, 0.8]]), np.array([[0.0, 0.5], [0.5, 1.0]])
    )
    err = max(err, abs(loss - 0.025))
    return err


def _raff_invariant_error() -> float:
    rng = np.random.default_rng(7)
    f0 = FeatureMap(rng.normal(size=(4, 10, 12)))
    box_a = BoundingBox(2, 1, 5, 6)
    box_b = BoundingBox(4, 3, 6, 5)

    # residual identity at saturated-off logits
    off = raff(f0, [RoiPrediction(box_a, np.full((28, 28), -50.0))])
    err = float(np.max(np.abs(off.values - f0.values)))

    # exact 1.5x inside a zero-logit box, untouched outside
    one = raff(f0, [RoiPrediction(box_a, np.zeros((28, 28)))])
    rs, cs = box_a.slices()
    err = max(err, float(np.max(np.abs(one.values[:, rs, cs] - 1.5 * f0.values[:, rs, cs]))))
    outside = np.ones(f0.values.shape, dtype=bool)
    outside[:, rs, cs] = False
    if not np.array_equal(one.values[outside], f0.values[outside]):
        err = max(err, 1.0)

    # 2.25x where two zero-logit boxes overlap
    two = raff(
        f0,
        [RoiPrediction(box_a, np.zeros((28, 28))), RoiPrediction(box_b, np.zeros((28, 28)))],
    )
    overlap = np.zeros(f0.values.shape, dtype=bool)
    overlap[:, 3:7, 4:7] = True  # box_a ∩ box_b
    err = max(
        err,
        float(np.max(np.abs(two.values[overlap] - 2.25 * f0.values[overlap]))),
    )
    return err


def run_all_checks(seed: int = 20240807) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    aji_err, pq_err = _metric_oracle_errors(seed, n_pairs=100)
    return [
        CheckResult("aji-brute-force-equivalence (100 random 32x32 pairs)", aji_err, 0.0),
        CheckResult("pq-brute-force-equivalence (100 random 32x32 pairs)", pq_err, 0.0),
        CheckResult("hand-fixture-exactness", _fixture_error(), 1e-12),
        CheckResult("consistency-loss-gradient vs finite differences", consistency_grad_error(rng), 1e-6),
        CheckResult("raff-attention-gradient vs finite differences", raff_grad_error(rng), 1e-5),
        CheckResult("raff-invariants (identity / 1.5x / 2.25x / locality)", _raff_invariant_error(), 1e-12),
        CheckResult("bilinear-constant-preservation", _bilinear_error(), 0.0),
    ]


def _bilinear_error() -> float:
    const = resize_bilinear(np.full((5, 7), 0.5), 13, 11)
    err = float(np.max(np.abs(const - 0.5)))
    same = resize_bilinear(np.arange(12.0).reshape(3, 4), 4, 3)
    err = max(err, float(np.max(np.abs(same - np.arange(12.0).reshape(3, 4)))))
    return err
