# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernel; same contract as ``_kernels_py.distance_keys``."""

import numpy as np

from libc.stdint cimport int64_t, uint64_t

cdef uint64_t DIST_MAX = 0xFFFFFFFFFFFFFFFE


def distance_keys(coords, query, int metric):
    cdef const int64_t[:, ::1] c = np.ascontiguousarray(coords, dtype=np.int64)
    cdef const int64_t[::1] q = np.ascontiguousarray(query, dtype=np.int64)
    if c.shape[1] != q.shape[0]:
        raise ValueError("dimension mismatch")
    if metric < 1 or metric > 3:
        raise ValueError(f"unknown metric code {metric}")
    cdef Py_ssize_t n = c.shape[0], d = c.shape[1], i, j
    out_arr = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t acc, term
    cdef int64_t diff
    cdef bint overflow = False
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(d):
                diff = c[i, j] - q[j]
                term = <uint64_t>(diff if diff >= 0 else -diff)
                if metric == 3:
                    if term > acc:
                        acc = term
                else:
                    if metric == 2:
                        term = term * term
                    if acc > DIST_MAX - term:
                        overflow = True
                        break
                    acc += term
            if overflow:
                break
            out[i] = acc
    if overflow:
        raise OverflowError("distance does not fit in 64 bits")
    return out_arr
