# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled local-moving phase of Louvain. Mirrors bibliomap._louvain_py exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def local_move(
    const cnp.int64_t[::1] indptr,
    const cnp.int64_t[::1] indices,
    const double[::1] data,
    const double[::1] degree,
    cnp.int64_t[::1] comm,
    const cnp.int64_t[::1] order,
    double resolution,
    double m2,
    Py_ssize_t max_passes=1000,
):
    cdef Py_ssize_t n = degree.shape[0]
    cdef double[::1] tot = np.zeros(n, dtype=np.float64)
    cdef double[::1] link = np.zeros(n, dtype=np.float64)
    cdef cnp.int64_t[::1] seen = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j, t, u, v, c, best, cand, n_seen, passes = 0
    cdef long total_moves = 0, moves
    cdef double k_u, gain, best_gain, eps

    for i in range(n):
        tot[comm[i]] += degree[i]

    while passes < max_passes:
        passes += 1
        moves = 0
        for t in range(n):
            u = order[t]
            k_u = degree[u]
            c = comm[u]
            tot[c] -= k_u
            n_seen = 0
            seen[n_seen] = c
            n_seen += 1
            link[c] = 0.0
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if v == u:
                    continue
                cand = comm[v]
                if cand != c and link[cand] == 0.0:
                    # first visit of cand in this scan (weights are strictly positive)
                    seen[n_seen] = cand
                    n_seen += 1
                link[cand] += data[j]
            best = c
            best_gain = link[c] - resolution * tot[c] * k_u / m2
            eps = 1e-10 * k_u
            for i in range(1, n_seen):
                cand = seen[i]
                gain = link[cand] - resolution * tot[cand] * k_u / m2
                if gain > best_gain + eps:
                    best_gain = gain
                    best = cand
            for i in range(n_seen):
                link[seen[i]] = 0.0
            tot[best] += k_u
            if best != c:
                comm[u] = best
                moves += 1
        total_moves += moves
        if moves == 0:
            break
    return total_moves
