"""Shared builders for the test suite."""
import numpy as np

from segfuse import InstanceMap


def label_map(shape, spots):
    """Build an InstanceMap from {label: [(row, col), ...]}."""
    arr = np.zeros(shape, dtype=np.uint32)
    for label, pixels in spots.items():
        for r, c in pixels:
            arr[r, c] = label
    return InstanceMap(arr)


def rect_map(shape, rects):
    """Build an InstanceMap from [(label, row0, col0, height, width), ...]
    painted in order (later rectangles overwrite earlier ones)."""
    arr = np.zeros(shape, dtype=np.uint32)
    for label, r0, c0, h, w in rects:
        arr[r0:r0 + h, c0:c0 + w] = label
    return InstanceMap(arr)


def aji_6_11_pair():
    """The two-square fixture whose AJI is 6/11."""
    gt = rect_map((8, 8), [(1, 0, 0, 2, 2), (2, 4, 4, 2, 2)])
    pred = rect_map((8, 8), [(1, 0, 0, 2, 2), (2, 4, 5, 2, 2), (3, 7, 0, 1, 1)])
    return gt, pred


def pq_04_pair():
    """One matched pair at IoU 0.8 plus one FP and one FN: PQ = 0.4."""
    gt = rect_map((6, 10), [(1, 0, 0, 1, 10), (2, 2, 0, 1, 4)])
    pred = rect_map((6, 10), [(1, 0, 0, 1, 8), (2, 4, 0, 1, 4)])
    return gt, pred


def f1_05_pair():
    """Pred 1 covers gt 1 exactly; pred 2 overlaps exactly half of gt 2."""
    gt = rect_map((8, 8), [(1, 0, 0, 2, 2), (2, 4, 4, 2, 2)])
    pred = rect_map((8, 8), [(1, 0, 0, 2, 2), (2, 4, 5, 2, 2)])
    return gt, pred
