# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Masked pose-distance kernels for nearest-neighbour search."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pose_distances(const double[:, ::1] query, const unsigned char[::1] query_vis,
                   const double[:, :, ::1] cands, const unsigned char[:, ::1] cand_vis):
    cdef Py_ssize_t m, k, M = cands.shape[0], N = cands.shape[1]
    cdef double acc, dx, dy
    cdef long cnt
    out = np.empty(M, dtype=np.float64)
    cdef double[::1] res = out
    for m in range(M):
        acc = 0.0
        cnt = 0
        for k in range(N):
            if query_vis[k] and cand_vis[m, k]:
                dx = query[k, 0] - cands[m, k, 0]
                dy = query[k, 1] - cands[m, k, 1]
                acc = acc + (dx * dx + dy * dy)
                cnt += 1
        res[m] = acc / (2.0 * cnt) if cnt else np.inf
    return out


def nearest(const double[:, ::1] query, const unsigned char[::1] query_vis,
            const double[:, :, ::1] cands, const unsigned char[:, ::1] cand_vis,
            const unsigned char[::1] allowed):
    cdef Py_ssize_t m, k, M = cands.shape[0], N = cands.shape[1]
    cdef Py_ssize_t best = -1
    cdef double best_d = np.inf, acc, dx, dy, d
    cdef long cnt
    for m in range(M):
        if not allowed[m]:
            continue
        acc = 0.0
        cnt = 0
        for k in range(N):
            if query_vis[k] and cand_vis[m, k]:
                dx = query[k, 0] - cands[m, k, 0]
                dy = query[k, 1] - cands[m, k, 1]
                acc = acc + (dx * dx + dy * dy)
                cnt += 1
        if cnt == 0:
            continue
        d = acc / (2.0 * cnt)
        if d < best_d:
            best_d = d
            best = m
    return best, best_d
