"""numpy implementations of the per-machine kernels (fallback backend)."""
from __future__ import annotations

import numpy as np

_DIST_MAX = np.uint64(2**64 - 2)


def distance_keys(coords: np.ndarray, query: np.ndarray, metric: int) -> np.ndarray:
    """Distances of every row of ``coords`` to ``query`` as uint64.

    ``metric``: 1 = L1, 2 = squared L2, 3 = L-infinity.  Coordinates are
    bounded by 2^30 so each per-axis term fits; only the running sum can
    overflow, and that raises instead of wrapping.
    """
    coords = np.asarray(coords, dtype=np.int64)
    query = np.asarray(query, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != query.shape[0]:
        raise ValueError("dimension mismatch")
    n, d = coords.shape
    if d == 0:
        return np.zeros(n, dtype=np.uint64)
    absdiff = np.abs(coords - query).astype(np.uint64)
    if metric == 3:
        out = absdiff.max(axis=1)
    elif metric in (1, 2):
        terms = absdiff * absdiff if metric == 2 else absdiff
        out = terms[:, 0].copy()
        for j in range(1, d):
            nxt = out + terms[:, j]
            if (nxt < out).any():
                raise OverflowError("distance does not fit in 64 bits")
            out = nxt
    else:
        raise ValueError(f"unknown metric code {metric}")
    if n and out.max() > _DIST_MAX:
        raise OverflowError("distance does not fit in 64 bits")
    return out


def smallest_keys(dist: np.ndarray, ids: np.ndarray, l: int) -> np.ndarray:
    """Row indices of the ``l`` smallest (dist, id) pairs, in ascending order."""
    dist = np.asarray(dist, dtype=np.uint64)
    ids = np.asarray(ids, dtype=np.int64)
    n = dist.shape[0]
    if l <= 0 or n == 0:
        return np.empty(0, dtype=np.intp)
    if l < n:
        cut = np.partition(dist, l - 1)[l - 1]
        cand = np.flatnonzero(dist <= cut)
    else:
        cand = np.arange(n)
    order = np.lexsort((ids[cand], dist[cand]))
    return cand[order[:l]]
