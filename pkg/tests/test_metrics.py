import numpy as np
import pytest

from segfuse import (
    DimensionMismatchError,
    ImageMetrics,
    InstanceMap,
    MatchCounts,
    aggregate,
    aji,
    best_dice,
    compute_image_metrics,
    object_f1,
    panoptic_quality,
    pixel_dice,
    sbd,
)
from segfuse.selftest import (
    brute_force_aji,
    brute_force_f1,
    brute_force_pq,
    random_instance_map,
)
from util import aji_6_11_pair, f1_05_pair, pq_04_pair, rect_map


def relabel(
    m: InstanceMap, rng: np.random.Generator, preserve_order: bool = False
) -> InstanceMap:
    """Replace the instance ids. With preserve_order the new ids keep the old
    ascending order; otherwise they are randomly permuted."""
    labels = m.instance_labels()
    n = labels.size
    ranks = np.arange(n) if preserve_order else rng.permutation(n)
    offset = int(rng.integers(1, 50))
    lut = dict(zip(labels.tolist(), (ranks + offset + 1).tolist()))
    out = np.zeros_like(m.labels)
    for old, fresh in lut.items():
        out[m.labels == old] = fresh
    return InstanceMap(out)


class TestAji:
    def test_identity(self):
        m = rect_map((6, 6), [(1, 1, 1, 3, 3)])
        assert aji(m, m) == 1.0

    def test_empty_prediction(self):
        gt = rect_map((6, 6), [(1, 1, 1, 3, 3)])
        assert aji(gt, InstanceMap.zeros(6, 6)) == 0.0

    def test_hand_fixture_6_of_11(self):
        gt, pred = aji_6_11_pair()
        assert aji(gt, pred) == pytest.approx(6 / 11, abs=1e-15)

    def test_both_empty(self):
        assert aji(InstanceMap.zeros(4, 4), InstanceMap.zeros(4, 4)) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            aji(InstanceMap.zeros(4, 4), InstanceMap.zeros(4, 5))

    def test_matches_brute_force_bit_exactly(self):
        rng = np.random.default_rng(101)
        for _ in range(60):
            gt = random_instance_map(rng, 32, 32, 6)
            pred = random_instance_map(rng, 32, 32, 6)
            assert aji(gt, pred) == brute_force_aji(gt, pred)


class TestObjectF1:
    def test_identity_three_instances(self):
        m = rect_map((9, 9), [(1, 0, 0, 2, 2), (2, 0, 4, 2, 2), (3, 5, 5, 3, 3)])
        f1, counts = object_f1(m, m)
        assert f1 == 1.0
        assert counts == MatchCounts(3, 0, 0)

    def test_empty_prediction(self):
        gt = rect_map((9, 9), [(1, 0, 0, 2, 2), (2, 5, 5, 3, 3)])
        f1, counts = object_f1(gt, InstanceMap.zeros(9, 9))
        assert f1 == 0.0
        assert counts == MatchCounts(0, 0, 2)

    def test_half_overlap_is_not_tp(self):
        gt, pred = f1_05_pair()
        f1, counts = object_f1(gt, pred)
        assert f1 == 0.5
        assert counts == MatchCounts(1, 1, 1)

    def test_both_empty(self):
        f1, counts = object_f1(InstanceMap.zeros(3, 3), InstanceMap.zeros(3, 3))
        assert f1 == 1.0
        assert counts == MatchCounts(0, 0, 0)

    def test_order_changes_matching(self):
        # one gt; two predictions both intersecting it, only the smaller is >50%
        gt = rect_map((4, 8), [(1, 0, 0, 1, 4)])
        pred = rect_map((4, 8), [(1, 0, 1, 1, 3), (2, 1, 0, 2, 8)])
        # label 1 overlaps 3 of 4 gt pixels (>50%); label 2 misses the gt row
        f1_default, _ = object_f1(gt, pred)
        f1_reversed, _ = object_f1(gt, pred, order=[2, 1])
        assert f1_default == f1_reversed  # label 2 never intersects: order moot
        f1o, counts = object_f1(gt, pred, order=[1, 2])
        assert counts.tp == 1

    def test_order_validation(self):
        gt, pred = f1_05_pair()
        with pytest.raises(ValueError):
            object_f1(gt, pred, order=[1, 9])
        with pytest.raises(ValueError):
            object_f1(gt, pred, order=[1, 1])
        with pytest.raises(ValueError):
            object_f1(gt, pred, order=[1])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(55)
        for _ in range(40):
            gt = random_instance_map(rng, 24, 24, 5)
            pred = random_instance_map(rng, 24, 24, 5)
            got_f1, got_counts = object_f1(gt, pred)
            exp_f1, exp_counts = brute_force_f1(gt, pred)
            assert got_f1 == exp_f1
            assert got_counts == exp_counts


class TestPanopticQuality:
    def test_identity(self):
        m = rect_map((6, 6), [(1, 0, 0, 2, 2), (2, 3, 3, 2, 2)])
        r = panoptic_quality(m, m)
        assert (r.pq, r.dq, r.sq) == (1.0, 1.0, 1.0)

    def test_single_pair_iou_08(self):
        gt = rect_map((3, 10), [(1, 0, 0, 1, 10)])
        pred = rect_map((3, 10), [(1, 0, 0, 1, 8)])
        r = panoptic_quality(gt, pred)
        assert r.dq == 1.0
        assert r.sq == pytest.approx(0.8, abs=1e-15)
        assert r.pq == pytest.approx(0.8, abs=1e-15)

    def test_pq_04_fixture(self):
        gt, pred = pq_04_pair()
        r = panoptic_quality(gt, pred)
        assert r.dq == 0.5
        assert r.sq == pytest.approx(0.8, abs=1e-15)
        assert r.pq == pytest.approx(0.4, abs=1e-15)
        assert r.counts == MatchCounts(1, 1, 1)

    def test_both_empty(self):
        r = panoptic_quality(InstanceMap.zeros(4, 4), InstanceMap.zeros(4, 4))
        assert (r.pq, r.dq, r.sq) == (1.0, 1.0, 1.0)

    def test_pq_equals_dq_times_sq(self):
        rng = np.random.default_rng(77)
        for _ in range(30):
            gt = random_instance_map(rng, 24, 24, 5)
            pred = random_instance_map(rng, 24, 24, 5)
            r = panoptic_quality(gt, pred)
            assert abs(r.pq - r.dq * r.sq) <= 1e-12

    def test_matches_brute_force(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            gt = random_instance_map(rng, 32, 32, 6)
            pred = random_instance_map(rng, 32, 32, 6)
            got = panoptic_quality(gt, pred)
            pq, dq, sq, counts = brute_force_pq(gt, pred)
            assert got.pq == pq and got.dq == dq and got.sq == sq
            assert got.counts == counts


class TestPixelDice:
    def test_identity(self):
        m = rect_map((5, 5), [(1, 0, 0, 2, 3)])
        assert pixel_dice(m, m) == 1.0

    def test_empty_prediction(self):
        gt = rect_map((5, 5), [(1, 0, 0, 2, 3)])
        assert pixel_dice(gt, InstanceMap.zeros(5, 5)) == 0.0

    def test_half_overlap(self):
        gt = rect_map((2, 8), [(1, 0, 0, 1, 4)])
        pred = rect_map((2, 8), [(1, 0, 2, 1, 4)])
        assert pixel_dice(gt, pred) == 0.5

    def test_both_empty_is_perfect(self):
        assert pixel_dice(InstanceMap.zeros(4, 4), InstanceMap.zeros(4, 4)) == 1.0

    def test_label_structure_is_ignored(self):
        a = rect_map((4, 4), [(1, 0, 0, 4, 4)])
        b = rect_map((4, 4), [(1, 0, 0, 2, 4), (2, 2, 0, 2, 4)])
        assert pixel_dice(a, b) == 1.0


class TestBestDiceAndSbd:
    def test_identity(self):
        m = rect_map((6, 6), [(1, 0, 0, 2, 2), (2, 3, 3, 2, 2)])
        assert best_dice(m, m) == 1.0
        assert sbd(m, m) == 1.0

    def test_empty_target_gives_zero(self):
        p = rect_map((4, 4), [(1, 0, 0, 2, 2)])
        assert best_dice(p, InstanceMap.zeros(4, 4)) == 0.0

    def test_empty_source_errors(self):
        t = rect_map((4, 4), [(1, 0, 0, 2, 2)])
        with pytest.raises(ValueError):
            best_dice(InstanceMap.zeros(4, 4), t)
        with pytest.raises(ValueError):
            sbd(InstanceMap.zeros(4, 4), t)
        with pytest.raises(ValueError):
            sbd(t, InstanceMap.zeros(4, 4))

    def test_best_dice_picks_half_overlap(self):
        p = rect_map((6, 6), [(1, 0, 0, 1, 4)])
        t = rect_map((6, 6), [(1, 0, 2, 1, 4), (2, 3, 0, 1, 4)])
        # instance 1 of t shares 2 pixels with p; instance 2 is disjoint
        assert best_dice(p, t) == 0.5

    def test_sbd_single_vs_double(self):
        t = rect_map((6, 6), [(1, 0, 0, 2, 2), (2, 3, 3, 2, 2)])
        p = rect_map((6, 6), [(1, 0, 0, 2, 2)])
        assert best_dice(p, t) == 1.0
        assert best_dice(t, p) == 0.5
        assert sbd(p, t) == 0.5

    def test_sbd_symmetric(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            p = random_instance_map(rng, 16, 16, 4)
            t = random_instance_map(rng, 16, 16, 4)
            if p.instance_labels().size == 0 or t.instance_labels().size == 0:
                continue
            assert sbd(p, t) == sbd(t, p)
            assert best_dice(p, t) >= sbd(p, t)
            assert best_dice(t, p) >= sbd(p, t)


class TestMetricProperties:
    def test_identity_maps_score_one(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            m = random_instance_map(rng, 20, 20, 5)
            if m.instance_labels().size == 0:
                continue
            assert aji(m, m) == 1.0
            assert pixel_dice(m, m) == 1.0
            assert panoptic_quality(m, m).pq == 1.0

    def test_full_relabel_invariance_of_assignment_free_metrics(self):
        # pixel dice, PQ, and (symmetric) best dice do not depend on any
        # sequential matching, so arbitrary id permutations cannot move them
        rng = np.random.default_rng(13)
        for _ in range(25):
            gt = random_instance_map(rng, 20, 20, 5)
            pred = random_instance_map(rng, 20, 20, 5)
            gt2, pred2 = relabel(gt, rng), relabel(pred, rng)
            assert pixel_dice(gt, pred) == pixel_dice(gt2, pred2)
            a, b = panoptic_quality(gt, pred), panoptic_quality(gt2, pred2)
            assert a.counts == b.counts and a.dq == b.dq
            assert a.sq == pytest.approx(b.sq, abs=1e-12)
            assert a.pq == pytest.approx(b.pq, abs=1e-12)
            if gt.instance_labels().size and pred.instance_labels().size:
                assert sbd(pred, gt) == pytest.approx(sbd(pred2, gt2), abs=1e-12)

    def test_order_preserving_relabel_invariance_of_all_metrics(self):
        # aji and object_f1 process instances in ascending label order, so
        # only relabelings that keep that order leave them bit-identical
        rng = np.random.default_rng(14)
        for _ in range(25):
            gt = random_instance_map(rng, 20, 20, 5)
            pred = random_instance_map(rng, 20, 20, 5)
            gt2 = relabel(gt, rng, preserve_order=True)
            pred2 = relabel(pred, rng, preserve_order=True)
            assert aji(gt, pred) == aji(gt2, pred2)
            f1a, ca = object_f1(gt, pred)
            f1b, cb = object_f1(gt2, pred2)
            assert f1a == f1b and ca == cb
            assert pixel_dice(gt, pred) == pixel_dice(gt2, pred2)
            assert panoptic_quality(gt, pred).counts == panoptic_quality(gt2, pred2).counts

    def test_aji_greedy_matching_depends_on_instance_order(self):
        # Documented limitation: the used-once greedy matching makes AJI
        # depend on which ground-truth instance claims a contested
        # prediction first, so arbitrary id permutations CAN change it.
        # One prediction straddles both gt rows and is the best match for
        # either; whichever gt is visited first takes it.
        arr_gt = np.zeros((4, 10), dtype=np.uint32)
        arr_gt[0, :] = 1
        arr_gt[2, :] = 2
        arr_pred = np.zeros((4, 10), dtype=np.uint32)
        arr_pred[0, 0:8] = 1
        arr_pred[2, 0:7] = 1
        arr_pred[2, 7:10] = 2
        gt, pred = InstanceMap(arr_gt), InstanceMap(arr_pred)
        swapped = np.zeros_like(arr_gt)
        swapped[arr_gt == 1] = 2
        swapped[arr_gt == 2] = 1
        assert aji(gt, pred) == pytest.approx(11 / 27, abs=1e-15)
        assert aji(InstanceMap(swapped), pred) == pytest.approx(7 / 31, abs=1e-15)

    def test_monotone_degradation(self):
        rng = np.random.default_rng(21)
        done = 0
        while done < 30:
            gt = random_instance_map(rng, 24, 24, 5)
            # derive pred from gt by a small shift so IoU>0.5 matches exist
            shifted = np.zeros_like(gt.labels)
            shifted[1:, :] = gt.labels[:-1, :]
            pred = InstanceMap(shifted)
            r = panoptic_quality(gt, pred)
            if r.counts.tp == 0:
                continue
            # find one IoU>0.5 matched prediction and delete it
            victim = None
            for p in pred.instance_labels().tolist():
                pmask = pred.labels == p
                for g in gt.instance_labels().tolist():
                    inter = int(np.count_nonzero(pmask & (gt.labels == g)))
                    union = int(np.count_nonzero(pmask | (gt.labels == g)))
                    if union and inter / union > 0.5:
                        victim = p
                        break
                if victim is not None:
                    break
            assert victim is not None
            reduced = pred.labels.copy()
            reduced[reduced == victim] = 0
            pred2 = InstanceMap(reduced)
            assert aji(gt, pred2) <= aji(gt, pred)
            assert object_f1(gt, pred2)[0] <= object_f1(gt, pred)[0]
            assert panoptic_quality(gt, pred2).pq <= r.pq
            done += 1


class TestComputeImageMetrics:
    def test_matches_individual_ops(self):
        rng = np.random.default_rng(31)
        for _ in range(15):
            gt = random_instance_map(rng, 20, 20, 5)
            pred = random_instance_map(rng, 20, 20, 5)
            m = compute_image_metrics(gt, pred, with_sbd=True)
            assert m.aji == aji(gt, pred)
            assert m.dice == pixel_dice(gt, pred)
            assert m.f1 == object_f1(gt, pred)[0]
            assert m.pq.pq == panoptic_quality(gt, pred).pq
            if gt.instance_labels().size and pred.instance_labels().size:
                assert m.sbd == sbd(pred, gt)
            else:
                assert m.sbd is None

    def test_sbd_skipped_without_flag(self):
        gt, pred = aji_6_11_pair()
        assert compute_image_metrics(gt, pred).sbd is None


class TestAggregate:
    def image(self, v, sbd_value=None):
        from segfuse import PqResult
        return ImageMetrics(
            aji=v, dice=v, f1=v,
            pq=PqResult(v, 1.0, v, MatchCounts(1, 0, 0), v),
            sbd=sbd_value,
        )

    def test_single_image(self):
        agg = aggregate([self.image(0.75)])
        assert agg.aji.mean == 0.75
        assert agg.aji.std == 0.0
        assert agg.aji.n_images == 1

    def test_population_std(self):
        agg = aggregate([self.image(0.4), self.image(0.6)])
        assert agg.aji.mean == pytest.approx(0.5, abs=1e-15)
        assert agg.aji.std == pytest.approx(0.1, abs=1e-15)

    def test_identical_values_zero_std(self):
        agg = aggregate([self.image(0.3)] * 5)
        assert agg.f1.std == 0.0

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_sbd_aggregates_over_present_subset(self):
        agg = aggregate([self.image(0.5, sbd_value=0.8), self.image(0.5)])
        assert agg.sbd is not None
        assert agg.sbd.mean == 0.8
        assert agg.sbd.n_images == 1
        assert aggregate([self.image(0.5)]).sbd is None
