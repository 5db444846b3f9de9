"""Bilinear resampling with half-pixel centers, plus its adjoint.

Source coordinates follow the detection-framework convention
``src = (dst + 0.5) * (src_size / dst_size) - 0.5`` with clamp-to-edge, and
each axis is interpolated in lerp form ``a + t * (b - a)`` so that constant
grids resize to the exact same constant.
"""
from __future__ import annotations

import numpy as np


def _axis_coeffs(src_n: int, dst_n: int):
    """Per-output-pixel (low index, high index, fraction) along one axis."""
    scale = src_n / dst_n
    coord = (np.arange(dst_n, dtype=np.float64) + 0.5) * scale - 0.5
    coord = np.clip(coord, 0.0, float(src_n - 1))
    lo = np.floor(coord).astype(np.int64)
    hi = np.minimum(lo + 1, src_n - 1)
    frac = coord - lo
    return lo, hi, frac


def resize_bilinear(grid: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Resample a 2-D grid to target_h x target_w."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError("source grid must be at least 1x1")
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be >= 1x1, got {target_w}x{target_h}")
    ylo, yhi, wy = _axis_coeffs(g.shape[0], target_h)
    xlo, xhi, wx = _axis_coeffs(g.shape[1], target_w)
    rows = g[ylo] + wy[:, None] * (g[yhi] - g[ylo])  # (target_h, src_w)
    out = rows[:, xlo] + wx[None, :] * (rows[:, xhi] - rows[:, xlo])
    return out


def resize_adjoint(grad_out: np.ndarray, src_h: int, src_w: int) -> np.ndarray:
    """Transpose of resize_bilinear: scatter a gradient on the output grid
    back to a src_h x src_w gradient on the input grid."""
    d = np.asarray(grad_out, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"expected a 2-D gradient grid, got shape {d.shape}")
    dst_h, dst_w = d.shape
    ylo, yhi, wy = _axis_coeffs(src_h, dst_h)
    xlo, xhi, wx = _axis_coeffs(src_w, dst_w)
    # Undo the column lerp: d_rows has the intermediate (dst_h, src_w) shape.
    d_rows = np.zeros((dst_h, src_w), dtype=np.float64)
    np.add.at(d_rows.T, xlo, ((1.0 - wx)[:, None] * d.T))
    np.add.at(d_rows.T, xhi, (wx[:, None] * d.T))
    d_src = np.zeros((src_h, src_w), dtype=np.float64)
    np.add.at(d_src, ylo, (1.0 - wy)[:, None] * d_rows)
    np.add.at(d_src, yhi, wy[:, None] * d_rows)
    return d_src
