"""Bibliographic-coupling and direct-citation paper graphs."""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import sparse

from .corpus import PaperRecord, reference_keys


class RelationMode(str, enum.Enum):
    BC = "BC"
    CIT = "CIT"


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class RelationGraph:
    """Undirected weighted paper graph; each unordered pair is stored once with u < v."""

    mode: RelationMode
    nodes: tuple[int, ...]
    edges: Mapping[tuple[int, int], float] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("duplicate node ids")
        for (u, v), w in self.edges.items():
            if u >= v:
                raise ValueError(f"edge ({u}, {v}) must satisfy u < v (no self-loops)")
            if u not in node_set or v not in node_set:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")
            if not w > 0:
                raise ValueError(f"edge ({u}, {v}) has non-positive weight {w}")

    def weight(self, u: int, v: int) -> float:
        return self.edges.get(_edge(u, v), 0.0)

    @property
    def total_weight(self) -> float:
        """Sum of edge weights over unordered pairs (w, so 2w is the ordered-pair total)."""
        return float(sum(self.edges.values()))

    def neighbors(self, u: int) -> dict[int, float]:
        out = {}
        for (a, b), w in self.edges.items():
            if a == u:
                out[b] = w
            elif b == u:
                out[a] = w
        return out

    def to_csr(self) -> sparse.csr_matrix:
        """Symmetric adjacency over ``nodes`` in their stored order."""
        index = {n: i for i, n in enumerate(self.nodes)}
        n = len(self.nodes)
        if not self.edges:
            return sparse.csr_matrix((n, n), dtype=np.float64)
        pairs = sorted(self.edges)
        rows = np.array([index[u] for u, _ in pairs] + [index[v] for _, v in pairs])
        cols = np.array([index[v] for _, v in pairs] + [index[u] for u, _ in pairs])
        data = np.array([self.edges[p] for p in pairs] * 2, dtype=np.float64)
        mat = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        mat.sort_indices()
        return mat


LinkStrengthTable = dict[int, float]


def coupling_graph(papers: Sequence[PaperRecord]) -> RelationGraph:
    """Edge weight = number of shared normalized reference titles."""
    refs = {p.paper_id: {k.normalized_title for k in reference_keys(p)} for p in papers}
    holders: dict[str, list[int]] = defaultdict(list)
    for pid in sorted(refs):
        for title in refs[pid]:
            holders[title].append(pid)
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for ids in holders.values():
        for u, v in combinations(ids, 2):
            counts[(u, v)] += 1
    edges = {pair: float(c) for pair, c in sorted(counts.items())}
    return RelationGraph(RelationMode.BC, tuple(p.paper_id for p in papers), edges)


def citation_graph(papers: Sequence[PaperRecord]) -> RelationGraph:
    """Undirected projection c_ij + c_ji of resolved in-corpus citations."""
    ids = {p.paper_id for p in papers}
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for p in papers:
        for target in p.cited_in_corpus:
            if target in ids and target != p.paper_id:
                counts[_edge(p.paper_id, target)] += 1
    edges = {pair: float(c) for pair, c in sorted(counts.items())}
    return RelationGraph(RelationMode.CIT, tuple(p.paper_id for p in papers), edges)


def link_strength(graph: RelationGraph) -> LinkStrengthTable:
    strength = {n: 0.0 for n in graph.nodes}
    for (u, v), w in graph.edges.items():
        strength[u] += w
        strength[v] += w
    return strength


def association_strength(graph: RelationGraph) -> RelationGraph:
    """Replace each weight w_uv by w_uv / (s_u * s_v), s being raw link strength."""
    if graph.normalized:
        raise ValueError("graph is already normalized")
    s = link_strength(graph)
    edges = {(u, v): w / (s[u] * s[v]) for (u, v), w in graph.edges.items()}
    return RelationGraph(graph.mode, graph.nodes, edges, normalized=True)


def threshold_edges(graph: RelationGraph, min_weight: float) -> RelationGraph:
    if min_weight < 0:
        raise ValueError("min_weight must be non-negative")
    edges = {pair: w for pair, w in graph.edges.items() if w >= min_weight}
    return RelationGraph(graph.mode, graph.nodes, edges, graph.normalized)


def build_graph(
    papers: Sequence[PaperRecord],
    mode: RelationMode | str = RelationMode.BC,
    min_raw_weight: float = 1.0,
    normalize: bool = True,
    min_weight: float = 0.0,
) -> RelationGraph:
    """Raw graph -> raw threshold -> association strength -> post-normalization threshold."""
    mode = RelationMode(mode)
    graph = coupling_graph(papers) if mode is RelationMode.BC else citation_graph(papers)
    graph = threshold_edges(graph, min_raw_weight)
    if normalize:
        graph = association_strength(graph)
    return threshold_edges(graph, min_weight)


def write_edge_list(graph: RelationGraph, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["u", "v", "weight"])
        for (u, v), w in sorted(graph.edges.items()):
            writer.writerow([u, v, repr(float(w))])


def read_edge_list(
    path, nodes: Optional[Sequence[int]] = None, mode: RelationMode | str = RelationMode.BC,
    normalized: bool = False,
) -> RelationGraph:
    edges: dict[tuple[int, int], float] = {}
    seen: set[int] = set()
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            u, v, w = int(row["u"]), int(row["v"]), float(row["weight"])
            seen.update((u, v))
            if u != v and w > 0:
                edges[_edge(u, v)] = w
    node_ids = tuple(nodes) if nodes is not None else tuple(sorted(seen))
    return RelationGraph(RelationMode(mode), node_ids, edges, normalized)
