# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring, union and assignment kernels.

Every routine accumulates in a fixed sequential order so a row's result is
independent of which other rows are scored alongside it.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def l2_rows(const double[:, ::1] X, const double[::1] q, const long long[::1] idx):
    cdef Py_ssize_t m = idx.shape[0], d = X.shape[1], i, j
    cdef long long r
    cdef double acc, diff
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            r = idx[i]
            acc = 0.0
            for j in range(d):
                diff = X[r, j] - q[j]
                acc = acc + diff * diff
            o[i] = sqrt(acc)
    return out


def cosine_rows(const double[:, ::1] X, const double[::1] norms, const double[::1] q,
                double qnorm, const long long[::1] idx):
    cdef Py_ssize_t m = idx.shape[0], d = X.shape[1], i, j
    cdef long long r
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            r = idx[i]
            acc = 0.0
            for j in range(d):
                acc = acc + X[r, j] * q[j]
            o[i] = acc / (norms[r] * qnorm)
    return out


cdef inline double _dist(const double[:, ::1] A, Py_ssize_t a,
                         const double[:, ::1] B, Py_ssize_t b, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t j
    for j in range(d):
        diff = A[a, j] - B[b, j]
        acc = acc + diff * diff
    return sqrt(acc)


def keypoint_counts(const double[:, ::1] Q, const double[:, ::1] P,
                    const long long[::1] offsets, const long long[::1] idx, double ratio):
    cdef Py_ssize_t m = idx.shape[0], nq = Q.shape[0], d = Q.shape[1]
    cdef Py_ssize_t i, a, b, start, stop
    cdef long long r, count
    cdef double dist, best, second
    out = np.zeros(m, dtype=np.int64)
    cdef long long[::1] o = out
    with nogil:
        for i in range(m):
            r = idx[i]
            start = offsets[r]
            stop = offsets[r + 1]
            count = 0
            if stop - start == 1:
                for a in range(nq):
                    if _dist(Q, a, P, start, d) == 0.0:
                        count += 1
            elif stop - start >= 2:
                for a in range(nq):
                    best = INFINITY
                    second = INFINITY
                    for b in range(start, stop):
                        dist = _dist(Q, a, P, b, d)
                        if dist < best:
                            second = best
                            best = dist
                        elif dist < second:
                            second = dist
                    if best < ratio * second:
                        count += 1
            o[i] = count
    return out


def union_blocks(const long long[::1] post_pos, const double[::1] post_conf,
                 const long long[::1] block_off, const long long[::1] blocks,
                 const double[::1] qconf, Py_ssize_t n_items):
    """Sorted distinct item positions in the selected blocks, each with the
    largest query confidence among the selected blocks holding it."""
    cdef Py_ssize_t nb = blocks.shape[0], b, k, n_touched = 0, total = 0
    cdef long long blk, p
    cdef double c
    for b in range(nb):
        blk = blocks[b]
        total += block_off[blk + 1] - block_off[blk]
    best_arr = np.full(n_items, -1.0, dtype=np.float64)
    touched_arr = np.empty(min(total, n_items), dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef long long[::1] touched = touched_arr
    with nogil:
        for b in range(nb):
            blk = blocks[b]
            c = qconf[b]
            for k in range(block_off[blk], block_off[blk + 1]):
                p = post_pos[k]
                if best[p] < 0.0:
                    touched[n_touched] = p
                    n_touched += 1
                    best[p] = c
                elif c > best[p]:
                    best[p] = c
    members = np.sort(touched_arr[:n_touched])
    return members, best_arr[members]


def nearest_centroid(const double[:, ::1] X, const double[:, ::1] C):
    cdef Py_ssize_t n = X.shape[0], k = C.shape[0], d = X.shape[1], i, c
    cdef long long arg
    cdef double best, dist
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for c in range(k):
                dist = _dist(X, i, C, c, d)
                if dist < best:
                    best = dist
                    arg = c
            o[i] = arg
    return out
