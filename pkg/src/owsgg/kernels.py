"""Numeric hot kernels with numba-accelerated and pure-numpy paths.

Everything here is called per image over n x n pair matrices or per box over
depth-map pixels, which is where the offline (replayed) pipeline spends its
time. Set OWSGG_NUMBA=0 to force the numpy path; the default uses numba when
it imports. `benchmarks/bench_kernels.py` compares the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = os.environ.get("OWSGG_NUMBA", "1").strip().lower()
_WANT_NUMBA = _ENV_FLAG not in ("0", "false", "off")

try:
    if _WANT_NUMBA:
        from numba import njit

        HAS_NUMBA = True
    else:
        HAS_NUMBA = False
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


# -- numpy reference implementations ----------------------------------------


def _iou_matrix_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax1, ay1, ax2, ay2 = a[:, 0:1], a[:, 1:2], a[:, 2:3], a[:, 3:4]
    bx1, by1, bx2, by2 = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _pair_distance_matrix_numpy(
    centers: np.ndarray, depths: np.ndarray, diag: float, lam1: float, lam2: float
) -> np.ndarray:
    dx = centers[:, 0:1] - centers[None, :, 0]
    dy = centers[:, 1:2] - centers[None, :, 1]
    planar = np.sqrt(dx * dx + dy * dy) / diag
    dz = np.abs(depths[:, None] - depths[None, :])
    return lam1 * planar + lam2 * dz


def _box_median_depth_numpy(values: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    h, w = values.shape
    out = np.empty(boxes.shape[0], dtype=np.float64)
    for k in range(boxes.shape[0]):
        c0 = min(max(int(math.floor(boxes[k, 0])), 0), w - 1)
        r0 = min(max(int(math.floor(boxes[k, 1])), 0), h - 1)
        c1 = min(max(int(math.ceil(boxes[k, 2])), c0 + 1), w)
        r1 = min(max(int(math.ceil(boxes[k, 3])), r0 + 1), h)
        out[k] = np.median(values[r0:r1, c0:c1])
    return out


def _sigmoid_gate_numpy(d: np.ndarray, tau: float, beta: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(beta * (d - tau)))


# -- numba implementations ---------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _iou_matrix_numba(a, b):
        m, n = a.shape[0], b.shape[0]
        out = np.zeros((m, n), dtype=np.float64)
        for i in range(m):
            area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
            for j in range(n):
                iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
                if iw <= 0.0:
                    continue
                ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
                if ih <= 0.0:
                    continue
                inter = iw * ih
                area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
                union = area_a + area_b - inter
                if union > 0.0:
                    out[i, j] = inter / union
        return out

    @njit(cache=True)
    def _pair_distance_matrix_numba(centers, depths, diag, lam1, lam2):
        n = centers.shape[0]
        out = np.zeros((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(n):
                dx = centers[i, 0] - centers[j, 0]
                dy = centers[i, 1] - centers[j, 1]
                planar = math.sqrt(dx * dx + dy * dy) / diag
                dz = abs(depths[i] - depths[j])
                out[i, j] = lam1 * planar + lam2 * dz
        return out

    @njit(cache=True)
    def _box_median_depth_numba(values, boxes):
        h, w = values.shape
        out = np.empty(boxes.shape[0], dtype=np.float64)
        for k in range(boxes.shape[0]):
            c0 = min(max(int(math.floor(boxes[k, 0])), 0), w - 1)
            r0 = min(max(int(math.floor(boxes[k, 1])), 0), h - 1)
            c1 = min(max(int(math.ceil(boxes[k, 2])), c0 + 1), w)
            r1 = min(max(int(math.ceil(boxes[k, 3])), r0 + 1), h)
            out[k] = np.median(values[r0:r1, c0:c1].copy())
        return out

    @njit(cache=True)
    def _sigmoid_gate_numba(d, tau, beta):
        out = np.empty_like(d)
        flat_in = d.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.shape[0]):
            flat_out[i] = 1.0 / (1.0 + math.exp(beta * (flat_in[i] - tau)))
        return out


# -- public dispatchers -------------------------------------------------------


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (m,4) and (n,4) corner-form box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if HAS_NUMBA:
        return _iou_matrix_numba(a, b)
    return _iou_matrix_numpy(a, b)


def pair_distance_matrix(
    centers: np.ndarray, depths: np.ndarray, diag: float, lam1: float, lam2: float
) -> np.ndarray:
    """Symmetric n x n matrix of lam1 * (planar_dist / diag) + lam2 * |depth_i - depth_j|."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    depths = np.ascontiguousarray(depths, dtype=np.float64)
    if HAS_NUMBA:
        return _pair_distance_matrix_numba(centers, depths, float(diag), float(lam1), float(lam2))
    return _pair_distance_matrix_numpy(centers, depths, float(diag), float(lam1), float(lam2))


def box_median_depth(values: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Median depth inside each clamped box.

    Pixel (r, c) belongs to a box when c in [floor(x1), ceil(x2)) and
    r in [floor(y1), ceil(y2)); every valid box covers at least one pixel.
    Even-count medians average the two middle values.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    if boxes.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    if HAS_NUMBA:
        return _box_median_depth_numba(values, boxes)
    return _box_median_depth_numpy(values, boxes)


def sigmoid_gate_matrix(d: np.ndarray, tau: float, beta: float) -> np.ndarray:
    """Elementwise sigmoid(-beta * (d - tau)); open interval (0, 1)."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    if HAS_NUMBA:
        return _sigmoid_gate_numba(d, float(tau), float(beta))
    return _sigmoid_gate_numpy(d, float(tau), float(beta))


IMPLEMENTATIONS = {
    "iou_matrix": {"numpy": _iou_matrix_numpy, "numba": _iou_matrix_numba if HAS_NUMBA else None},
    "pair_distance_matrix": {
        "numpy": _pair_distance_matrix_numpy,
        "numba": _pair_distance_matrix_numba if HAS_NUMBA else None,
    },
    "box_median_depth": {
        "numpy": _box_median_depth_numpy,
        "numba": _box_median_depth_numba if HAS_NUMBA else None,
    },
    "sigmoid_gate_matrix": {
        "numpy": _sigmoid_gate_numpy,
        "numba": _sigmoid_gate_numba if HAS_NUMBA else None,
    },
}
