"""Hot numeric kernels: Levenshtein DP, pairwise distances, IoU matrices.

Each kernel has a numba-compiled path and a pure-numpy fallback. The fallback
is selected when numba is unavailable or when the environment variable
``DOCHARMONIZE_DISABLE_NUMBA`` is set to 1/true/yes. Both paths compute
identical results; ``bench/benchmark_kernels.py`` compares their throughput.
"""

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("DOCHARMONIZE_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")


try:
    if _numba_disabled():
        raise ImportError("numba disabled by DOCHARMONIZE_DISABLE_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


# --- implementations (njit-compatible loop form) ---

def _levenshtein_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1)
    curr = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        curr[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            d = prev[j - 1] + cost
            if prev[j] + 1 < d:
                d = prev[j] + 1
            if curr[j - 1] + 1 < d:
                d = curr[j - 1] + 1
            curr[j] = d
        prev, curr = curr, prev
    return int(prev[m])


def _pairwise_sq_dists_loop(x):
    n, d = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                s += diff * diff
            out[i, j] = s
            out[j, i] = s
    return out


def _iou_matrix_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        ax0, ay0, ax1, ay1 = a[i, 0], a[i, 1], a[i, 2], a[i, 3]
        area_a = (ax1 - ax0) * (ay1 - ay0)
        for j in range(m):
            ix0 = max(ax0, b[j, 0])
            iy0 = max(ay0, b[j, 1])
            ix1 = min(ax1, b[j, 2])
            iy1 = min(ay1, b[j, 3])
            iw = ix1 - ix0
            ih = iy1 - iy0
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            union = area_a + area_b - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


# --- pure-numpy fallbacks ---

def _levenshtein_numpy(a, b):
    n = a.shape[0]
    m = b.shape[0]
    if n == 0:
        return int(m)
    if m == 0:
        return int(n)
    prev = np.arange(m + 1)
    idx = np.arange(m + 1)
    for i in range(1, n + 1):
        cost = (a[i - 1] != b).astype(np.int64)
        base = np.empty(m + 1, dtype=np.int64)
        base[0] = i
        base[1:] = np.minimum(prev[1:] + 1, prev[:-1] + cost)
        # fold in left-to-right insertions: curr[j] = min_k<=j base[k] + (j-k)
        prev = np.minimum.accumulate(base - idx) + idx
    return int(prev[m])


def _pairwise_sq_dists_numpy(x):
    sq = np.sum(x * x, axis=1)
    out = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def _iou_matrix_numpy(a, b):
    ix0 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy0 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix1 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix1 - ix0, 0.0, None) * np.clip(iy1 - iy0, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
    return iou


if NUMBA_ENABLED:
    levenshtein = njit(cache=True)(_levenshtein_loop)
    pairwise_sq_dists = njit(cache=True)(_pairwise_sq_dists_loop)
    iou_matrix = njit(cache=True)(_iou_matrix_loop)
else:
    levenshtein = _levenshtein_numpy
    pairwise_sq_dists = _pairwise_sq_dists_numpy
    iou_matrix = _iou_matrix_numpy


def codepoints(s: str) -> np.ndarray:
    """Encode a string as an int64 code-point array for the Levenshtein kernel."""
    return np.fromiter((ord(c) for c in s), dtype=np.int64, count=len(s))
