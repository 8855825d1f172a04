"""Compare the compiled and pure-Python Louvain local-move kernels.

    python benchmarks/bench_louvain.py [--sizes 200 1000 4000] [--repeat 3]
"""

import argparse
import statistics
import time

import numpy as np

from bibliomap import _louvain_py
from bibliomap.synthetic import planted_partition_graph

try:
    from bibliomap import _louvain_ext
except ImportError:  # extension not built
    _louvain_ext = None


def _inputs(n_nodes, seed):
    blocks = 4
    size = n_nodes // blocks
    # keep the expected degree near 12 regardless of size
    p_in = min(1.0, 10.0 / size)
    p_out = 2.0 / (n_nodes - size)
    graph, _ = planted_partition_graph(blocks, size, p_in, p_out, seed)
    adj = graph.to_csr()
    degree = np.asarray(adj.sum(axis=1)).ravel().astype(np.float64)
    order = np.random.default_rng(seed).permutation(adj.shape[0]).astype(np.int64)
    args = (
        adj.indptr.astype(np.int64), adj.indices.astype(np.int64), adj.data.astype(np.float64),
        degree,
    )
    return args, order, float(adj.sum()), len(graph.edges)


def _time(kernel, args, order, m2, repeat):
    times, result = [], None
    for _ in range(repeat):
        comm = np.arange(len(args[3]), dtype=np.int64)
        t0 = time.perf_counter()
        moves = kernel.local_move(*args, comm, order, 1.0, m2)
        times.append(time.perf_counter() - t0)
        result = (moves, comm.copy())
    return statistics.median(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    opts = ap.parse_args()

    print(f"{'nodes':>7} {'edges':>8} {'python s':>10} {'cython s':>10} {'speedup':>8}  same")
    for n in opts.sizes:
        args, order, m2, n_edges = _inputs(n, opts.seed)
        t_py, r_py = _time(_louvain_py, args, order, m2, opts.repeat)
        if _louvain_ext is None:
            print(f"{n:>7} {n_edges:>8} {t_py:>10.4f} {'n/a':>10} {'n/a':>8}  -")
            continue
        t_cy, r_cy = _time(_louvain_ext, args, order, m2, opts.repeat)
        same = r_py[0] == r_cy[0] and np.array_equal(r_py[1], r_cy[1])
        print(f"{n:>7} {n_edges:>8} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
