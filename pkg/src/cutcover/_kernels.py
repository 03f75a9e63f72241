"""Compiled inner loops with pure-Python fallbacks.

The two hot kernels (Kruskal scan for tree packing, and the batched
segment walks in the cut oracle) are compiled with numba when it is
available. The fallbacks implement identical arithmetic so results are
bit-for-bit the same either way; only speed differs.
"""
from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly by which path runs
    import numba

    HAS_NUMBA = True
except Exception:  # pragma: no cover
    numba = None
    HAS_NUMBA = False


def _kruskal_core(order: np.ndarray, src: np.ndarray, dst: np.ndarray,
                  n: int, out: np.ndarray) -> int:
    """Scan edges in the given order, keep those joining two components.

    Union-find with path halving; linking is by root index so the result
    depends only on the scan order. Writes chosen edge ids into out and
    returns how many were chosen.
    """
    parent = np.arange(n, dtype=np.int64)
    count = 0
    for idx in range(order.shape[0]):
        e = order[idx]
        a = src[e]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = dst[e]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
            out[count] = e
            count += 1
            if count == n - 1:
                break
    return count


if HAS_NUMBA:
    _kruskal_compiled = numba.njit(cache=True, nogil=True)(_kruskal_core)
else:  # pragma: no cover
    _kruskal_compiled = _kruskal_core


def _rect_sums_core(x1: np.ndarray, x2: np.ndarray, y1: np.ndarray,
                    y2: np.ndarray, keys: np.ndarray, koff: np.ndarray,
                    pref: np.ndarray, poff: np.ndarray, depth: int,
                    width: int, out: np.ndarray) -> None:
    """Per-query rectangle sums over the two-level range structure.

    Walks the x-axis segment tree bottom-up (level = depth - step, the
    same canonical decomposition the vectorized cover produces) and adds
    the per-node prefix-sum difference of the y run. Summation order is
    fixed by the walk, so results are deterministic.
    """
    nq = x1.shape[0]
    for i in range(nq):
        ylo = y1[i]
        yhi = y2[i]
        if x1[i] >= x2[i] or ylo >= yhi:
            out[i] = 0.0
            continue
        lo = x1[i] + width
        hi = x2[i] + width
        level = depth
        acc = 0.0
        while lo < hi:
            if lo & 1:
                base = koff[level]
                end = koff[level + 1]
                klo = ((lo - (1 << level)) << 32) | ylo
                khi = ((lo - (1 << level)) << 32) | yhi
                a = base
                b = end
                while a < b:
                    mid = (a + b) >> 1
                    if keys[mid] < klo:
                        a = mid + 1
                    else:
                        b = mid
                ai = a
                a = ai
                b = end
                while a < b:
                    mid = (a + b) >> 1
                    if keys[mid] < khi:
                        a = mid + 1
                    else:
                        b = mid
                acc += pref[poff[level] + (a - base)] \
                    - pref[poff[level] + (ai - base)]
                lo += 1
            if lo < hi and hi & 1:
                hi -= 1
                base = koff[level]
                end = koff[level + 1]
                klo = ((hi - (1 << level)) << 32) | ylo
                khi = ((hi - (1 << level)) << 32) | yhi
                a = base
                b = end
                while a < b:
                    mid = (a + b) >> 1
                    if keys[mid] < klo:
                        a = mid + 1
                    else:
                        b = mid
                ai = a
                a = ai
                b = end
                while a < b:
                    mid = (a + b) >> 1
                    if keys[mid] < khi:
                        a = mid + 1
                    else:
                        b = mid
                acc += pref[poff[level] + (a - base)] \
                    - pref[poff[level] + (ai - base)]
            lo >>= 1
            hi >>= 1
            level -= 1
        out[i] = acc


if HAS_NUMBA:
    _rect_sums_compiled = numba.njit(cache=True, nogil=True)(_rect_sums_core)
else:  # pragma: no cover
    _rect_sums_compiled = None


def rect_sums(x1: np.ndarray, x2: np.ndarray, y1: np.ndarray, y2: np.ndarray,
              keys: np.ndarray, koff: np.ndarray, pref: np.ndarray,
              poff: np.ndarray, depth: int, width: int) -> np.ndarray:
    """Batched rectangle sums; None-like fallback is handled by callers.

    Exposed only when the compiled path exists: the caller keeps a
    vectorized numpy route whose per-query totals agree up to float
    summation order and uses it when numba is unavailable.
    """
    if _rect_sums_compiled is None:  # pragma: no cover
        raise RuntimeError("compiled rectangle sums unavailable")
    out = np.empty(x1.shape[0], dtype=np.float64)
    _rect_sums_compiled(x1, x2, y1, y2, keys, koff, pref, poff,
                        depth, width, out)
    return out


def kruskal_mst(order: np.ndarray, src: np.ndarray, dst: np.ndarray,
                n: int) -> np.ndarray:
    """Edge ids of the spanning forest picked greedily in scan order.

    The caller guarantees connectivity, so the result has n - 1 edges.
    """
    out = np.empty(n - 1, dtype=np.int64)
    count = _kruskal_compiled(np.ascontiguousarray(order, dtype=np.int64),
                              src, dst, n, out)
    if count != n - 1:
        raise ValueError("edge scan did not span the graph")
    return out
