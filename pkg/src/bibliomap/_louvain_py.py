"""Pure-Python local-moving phase of Louvain, used when the extension is not built."""

import numpy as np


def local_move(indptr, indices, data, degree, comm, order, resolution, m2, max_passes=1000):
    """Greedy node moves until a full pass changes nothing.

    ``comm`` is updated in place; returns the number of moves made.
    """
    indptr = indptr.tolist()
    indices = indices.tolist()
    data = data.tolist()
    degree = degree.tolist()
    order = order.tolist()
    labels = comm.tolist()
    n = len(degree)
    tot = [0.0] * n
    for i in range(n):
        tot[labels[i]] += degree[i]

    total_moves = 0
    for _ in range(max_passes):
        moves = 0
        for u in order:
            k_u = degree[u]
            c = labels[u]
            tot[c] -= k_u
            link = {c: 0.0}
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if v == u:
                    continue
                cand = labels[v]
                link[cand] = link.get(cand, 0.0) + data[j]
            best = c
            best_gain = link[c] - resolution * tot[c] * k_u / m2
            eps = 1e-10 * k_u
            for cand, w in link.items():
                if cand == c:
                    continue
                gain = w - resolution * tot[cand] * k_u / m2
                if gain > best_gain + eps:
                    best_gain = gain
                    best = cand
            tot[best] += k_u
            if best != c:
                labels[u] = best
                moves += 1
        total_moves += moves
        if moves == 0:
            break
    comm[:] = np.asarray(labels, dtype=comm.dtype)
    return total_moves
