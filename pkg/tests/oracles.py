"""Independent reference implementations used only by the tests.

Each one is written from the textbook definition with plain loops, sharing no
code with the package.
"""

import itertools
import math
from collections import Counter


def modularity_direct(nodes, edges, assignment, resolution=1.0):
    """Q = (1/2m) sum_ij [A_ij - gamma k_i k_j / 2m] delta(c_i, c_j) over ordered pairs."""
    adj = {u: {} for u in nodes}
    for (u, v), w in edges.items():
        adj[u][v] = adj[u].get(v, 0.0) + w
        adj[v][u] = adj[v].get(u, 0.0) + w
    deg = {u: sum(adj[u].values()) for u in nodes}
    m2 = sum(deg.values())
    if m2 == 0:
        return 0.0
    q = 0.0
    for i in nodes:
        for j in nodes:
            if assignment[i] == assignment[j]:
                q += adj[i].get(j, 0.0) - resolution * deg[i] * deg[j] / m2
    return q / m2


def set_partitions(items):
    """Every partition of ``items`` as a list of blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in set_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1 :]
        yield [[first]] + smaller


def best_partition_exhaustive(nodes, edges, resolution=1.0):
    best, best_q = None, -math.inf
    for blocks in set_partitions(nodes):
        assignment = {n: b for b, block in enumerate(blocks) for n in block}
        q = modularity_direct(nodes, edges, assignment, resolution)
        if q > best_q + 1e-12:
            best, best_q = blocks, q
    return best, best_q


def ari_pair_counting(a, b):
    """ARI from explicit pair enumeration (Hubert and Arabie)."""
    nodes = sorted(a)
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(nodes, 2):
        same_a = a[i] == a[j]
        same_b = b[i] == b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    total = n11 + n10 + n01 + n00
    if total == 0:
        return 1.0
    pairs_a = n11 + n10
    pairs_b = n11 + n01
    expected = pairs_a * pairs_b / total
    maximum = (pairs_a + pairs_b) / 2
    if maximum == expected:
        return 1.0 if n11 == expected else 0.0
    return (n11 - expected) / (maximum - expected)


def best_permutation_total(matrix):
    k = len(matrix)
    return max(sum(matrix[i][p[i]] for i in range(k)) for p in itertools.permutations(range(k)))


def cosine_loop(u, v):
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(y * y for y in v))
    return dot / (nu * nv)


def coverage_loop(s_vecs, b_vecs):
    return sum(max(cosine_loop(s, b) for b in b_vecs) for s in s_vecs) / len(s_vecs)


def silhouette_loop(vectors, labels):
    n = len(vectors)
    dist = [[1.0 - cosine_loop(vectors[i], vectors[j]) for j in range(n)] for i in range(n)]
    clusters = sorted(set(labels))
    total = 0.0
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(max(dist[i][j], 0.0) for j in own) / len(own)
        b = min(
            sum(max(dist[i][j], 0.0) for j in range(n) if labels[j] == c) / labels.count(c)
            for c in clusters
            if c != labels[i]
        )
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / n


def aggregate_sort_oracle(values, higher_is_better=True):
    """mean rank / median / win% per pipeline by sorting each instance's scores."""
    pipelines = sorted({p for per in values.values() for p in per})
    rank_sum = Counter()
    wins = Counter()
    columns = {p: [] for p in pipelines}
    for inst, per in values.items():
        ordered = sorted(pipelines, key=lambda p: per[p], reverse=higher_is_better)
        pos = 0
        while pos < len(ordered):
            end = pos
            while end + 1 < len(ordered) and per[ordered[end + 1]] == per[ordered[pos]]:
                end += 1
            avg = (pos + 1 + end + 1) / 2
            for p in ordered[pos : end + 1]:
                rank_sum[p] += avg
                if pos == 0:
                    wins[p] += 1
            pos = end + 1
        for p in pipelines:
            columns[p].append(per[p])
    n = len(values)
    out = {}
    for p in pipelines:
        col = sorted(columns[p])
        median = col[n // 2] if n % 2 else (col[n // 2 - 1] + col[n // 2]) / 2
        out[p] = (rank_sum[p] / n, median, 100.0 * wins[p] / n)
    return out
