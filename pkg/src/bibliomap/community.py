"""Louvain community detection, modularity, and resolution search for a fixed cluster count."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from scipy import sparse

from .graph import LinkStrengthTable, RelationGraph

logger = logging.getLogger(__name__)

if os.environ.get("BIBLIOMAP_PURE_PYTHON"):
    from ._louvain_py import local_move

    KERNEL = "python"
else:
    try:
        from ._louvain_ext import local_move

        KERNEL = "cython"
    except ImportError:  # extension not built
        from ._louvain_py import local_move

        KERNEL = "python"

RESOLUTION_LO = 0.1
RESOLUTION_HI = 10.0
GRID_POINTS = 25
MAX_BISECTIONS = 20
DEFAULT_TOP_K = 10


@dataclass(frozen=True)
class Partition:
    """Paper -> cluster label. Louvain output uses labels 1..k ordered by decreasing size."""

    assignment: Mapping[int, int]

    def __post_init__(self):
        if not self.assignment:
            raise ValueError("empty partition")
        if any(int(c) < 1 for c in self.assignment.values()):
            raise ValueError("cluster labels must be positive")

    @property
    def k(self) -> int:
        return len(set(self.assignment.values()))

    @property
    def labels(self) -> list[int]:
        return sorted(set(self.assignment.values()))

    @property
    def nodes(self) -> list[int]:
        return sorted(self.assignment)

    def members(self, label: int) -> list[int]:
        return sorted(n for n, c in self.assignment.items() if c == label)

    def clusters(self) -> dict[int, list[int]]:
        return {c: self.members(c) for c in self.labels}

    def relabeled(self) -> "Partition":
        """Labels 1..k by decreasing size; ties by smallest member id."""
        groups = self.clusters()
        order = sorted(groups, key=lambda c: (-len(groups[c]), groups[c][0]))
        new = {old: i + 1 for i, old in enumerate(order)}
        return Partition({n: new[c] for n, c in self.assignment.items()})


@dataclass(frozen=True)
class ResolutionSearchResult:
    resolution: float
    partition: Partition
    achieved_k: int
    exact: bool
    target_k: int


def _labels_for(graph: RelationGraph, partition: Partition) -> np.ndarray:
    try:
        return np.array([partition.assignment[n] for n in graph.nodes])
    except KeyError as exc:
        raise ValueError(f"partition does not cover node {exc.args[0]}") from None


def modularity(graph: RelationGraph, partition: Partition, resolution: float = 1.0) -> float:
    """Weighted modularity over ordered node pairs; 0 for a graph with no weight."""
    labels = _labels_for(graph, partition)
    m2 = 2.0 * graph.total_weight
    if m2 == 0:
        return 0.0
    index = {n: i for i, n in enumerate(graph.nodes)}
    _, compact = np.unique(labels, return_inverse=True)
    n_clusters = compact.max() + 1
    internal = np.zeros(n_clusters)
    degree_sum = np.zeros(n_clusters)
    for (u, v), w in graph.edges.items():
        cu, cv = compact[index[u]], compact[index[v]]
        degree_sum[cu] += w
        degree_sum[cv] += w
        if cu == cv:
            # same accumulation as the degrees so one cluster gives exactly 1 - 1
            internal[cu] += w
            internal[cu] += w
    m2 = float(np.sum(degree_sum))
    frac = degree_sum / m2
    return float(np.sum(internal / m2 - resolution * frac * frac))


def _aggregate(adj: sparse.csr_matrix, comm: np.ndarray, n_comm: int) -> sparse.csr_matrix:
    member = sparse.csr_matrix(
        (np.ones(len(comm)), (np.arange(len(comm)), comm)), shape=(len(comm), n_comm)
    )
    out = (member.T @ adj @ member).tocsr()
    out.sort_indices()
    return out


def louvain(
    graph: RelationGraph,
    resolution: float = 1.0,
    seed: int = 0,
    attach_singletons: bool = False,
) -> Partition:
    """Two-phase Louvain maximizing modularity at the given resolution.

    Node visit order at every level is a permutation drawn from ``seed``.
    Isolated nodes stay singletons unless ``attach_singletons`` moves them
    into cluster 1.
    """
    if not graph.nodes:
        raise ValueError("cannot cluster an empty graph")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n = len(graph.nodes)
    adj = graph.to_csr()
    m2 = float(adj.sum())
    membership = np.arange(n, dtype=np.int64)
    if m2 > 0:
        rng = np.random.default_rng(seed)
        level = adj
        while True:
            size = level.shape[0]
            comm = np.arange(size, dtype=np.int64)
            degree = np.asarray(level.sum(axis=1)).ravel().astype(np.float64)
            order = rng.permutation(size).astype(np.int64)
            moves = local_move(
                level.indptr.astype(np.int64),
                level.indices.astype(np.int64),
                level.data.astype(np.float64),
                degree,
                comm,
                order,
                float(resolution),
                m2,
            )
            if moves == 0:
                break
            uniq, comm = np.unique(comm, return_inverse=True)
            membership = comm[membership]
            if len(uniq) == size:
                break
            level = _aggregate(level, comm, len(uniq))

    partition = Partition(
        {node: int(c) + 1 for node, c in zip(graph.nodes, membership)}
    ).relabeled()
    if attach_singletons and partition.k > 1:
        strength = np.asarray(adj.sum(axis=1)).ravel()
        assignment = dict(partition.assignment)
        for i, node in enumerate(graph.nodes):
            if strength[i] == 0 and len(partition.members(assignment[node])) == 1:
                assignment[node] = 1
        partition = Partition(assignment).relabeled()
    return partition


def tune_resolution_to_k(
    graph: RelationGraph,
    target_k: int,
    seed: int = 0,
    lo: float = RESOLUTION_LO,
    hi: float = RESOLUTION_HI,
    grid_points: int = GRID_POINTS,
    max_bisections: int = MAX_BISECTIONS,
) -> ResolutionSearchResult:
    """Find a resolution whose Louvain partition has exactly ``target_k`` clusters.

    Log-spaced grid, then bisection inside the first bracketing grid interval.
    Falls back to the probe with k nearest the target (ties -> smaller k).
    Only the cluster count is targeted; no downstream score is consulted.
    """
    if target_k < 1:
        raise ValueError("target_k must be >= 1")
    if target_k > len(graph.nodes):
        raise ValueError(f"target_k={target_k} exceeds node count {len(graph.nodes)}")

    best: Optional[tuple[float, Partition]] = None

    def probe(gamma: float) -> Partition:
        nonlocal best
        part = louvain(graph, gamma, seed)
        logger.info("resolution probe gamma=%.6g k=%d Q=%.6f", gamma, part.k, modularity(graph, part, gamma))
        if best is None:
            best = (gamma, part)
        else:
            cur, new = best[1].k, part.k
            if (abs(new - target_k), new) < (abs(cur - target_k), cur):
                best = (gamma, part)
        return part

    def done(gamma: float, part: Partition) -> ResolutionSearchResult:
        return ResolutionSearchResult(gamma, part, part.k, part.k == target_k, target_k)

    grid = np.geomspace(lo, hi, grid_points)
    ks = []
    for gamma in grid:
        part = probe(float(gamma))
        if part.k == target_k:
            return done(float(gamma), part)
        ks.append(part.k)

    for i in range(len(grid) - 1):
        if ks[i] < target_k < ks[i + 1]:
            a, b = math.log(grid[i]), math.log(grid[i + 1])
            for _ in range(max_bisections):
                mid = 0.5 * (a + b)
                part = probe(math.exp(mid))
                if part.k == target_k:
                    return done(math.exp(mid), part)
                if part.k < target_k:
                    a = mid
                else:
                    b = mid
            break

    assert best is not None
    logger.warning(
        "resolution search missed target k=%d; nearest k=%d at gamma=%.6g",
        target_k, best[1].k, best[0],
    )
    return done(*best)


def rank_cluster_papers(
    partition: Partition, strengths: LinkStrengthTable, k_top: int = DEFAULT_TOP_K
) -> dict[int, list[int]]:
    """Per cluster, paper ids by descending link strength (ascending id on ties), cut to k_top."""
    if k_top < 1:
        raise ValueError("k_top must be positive")
    missing = [n for n in partition.assignment if n not in strengths]
    if missing:
        raise ValueError(f"no link strength for papers {missing[:5]}")
    return {
        c: sorted(members, key=lambda n: (-strengths[n], n))[:k_top]
        for c, members in partition.clusters().items()
    }


def write_partition(partition: Partition, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["paper_id", "cluster_id"])
        for node in partition.nodes:
            writer.writerow([node, partition.assignment[node]])


def read_partition(path) -> Partition:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return Partition({int(r["paper_id"]): int(r["cluster_id"]) for r in csv.DictReader(fh)})
