"""Evidence context text handed to the generator."""

from __future__ import annotations

import logging
from typing import Mapping, Optional, Sequence

from ..community import Partition
from ..corpus import BenchmarkInstance, PaperRecord
from .prompts import PipelineKind

logger = logging.getLogger(__name__)

DEFAULT_ABSTRACT_BUDGET = 1500


class ContextError(ValueError):
    pass


def _truncate(text: str, budget: Optional[int], paper_id: int) -> str:
    if budget is None or len(text) <= budget:
        return text
    logger.info("truncating abstract of paper %d from %d to %d chars", paper_id, len(text), budget)
    return text[:budget].rstrip() + " ..."


def record_block(paper: PaperRecord, cluster: Optional[int] = None, budget: Optional[int] = None) -> str:
    lines = [f"paper_id: {paper.paper_id}"]
    if cluster is not None:
        lines.append(f"cluster_id: {cluster}")
    lines.append(f"title: {paper.title}")
    lines.append(f"abstract: {_truncate(paper.abstract, budget, paper.paper_id)}")
    return "\n".join(lines)


def cluster_header(cluster: int, note: str = "") -> str:
    return f"### Cluster {cluster}{note}"


def build_context(
    kind: PipelineKind,
    instance: BenchmarkInstance,
    partition: Optional[Partition] = None,
    ranking: Optional[Mapping[int, Sequence[int]]] = None,
    abstract_budget: Optional[int] = DEFAULT_ABSTRACT_BUDGET,
) -> str:
    """Stage-1 context for a pipeline kind: empty for Blind, one block per paper otherwise."""
    kind = PipelineKind.parse(kind)
    if kind is PipelineKind.BLIND:
        return ""
    papers = sorted(instance.papers, key=lambda p: p.paper_id)
    if not kind.uses_partition:
        return "\n\n".join(record_block(p, budget=abstract_budget) for p in papers)
    if partition is None:
        raise ContextError(f"{kind.value} requires a partition")
    by_id = instance.by_id()
    if kind is PipelineKind.RANKED:
        if ranking is None:
            raise ContextError("Ranked requires per-cluster rankings")
        sections = []
        for cluster in sorted(ranking):
            blocks = [cluster_header(cluster, " (top papers ranked by link strength)")]
            blocks += [record_block(by_id[pid], cluster, abstract_budget) for pid in ranking[cluster]]
            sections.append("\n\n".join(blocks))
        return "\n\n".join(sections)
    missing = [p.paper_id for p in papers if p.paper_id not in partition.assignment]
    if missing:
        raise ContextError(f"partition lacks papers {missing[:5]}")
    ordered = sorted(papers, key=lambda p: (partition.assignment[p.paper_id], p.paper_id))
    return "\n\n".join(record_block(p, partition.assignment[p.paper_id], abstract_budget) for p in ordered)


def build_selected_context(
    instance: BenchmarkInstance,
    selections: Mapping[int, Sequence[int]],
    labeled: bool = False,
    abstract_budget: Optional[int] = DEFAULT_ABSTRACT_BUDGET,
) -> str:
    """Reduced second-stage context containing only the selected papers, grouped by cluster."""
    by_id = instance.by_id()
    sections = []
    for cluster in sorted(selections):
        blocks = [cluster_header(cluster)]
        blocks += [
            record_block(by_id[pid], cluster if labeled else None, abstract_budget)
            for pid in selections[cluster]
        ]
        sections.append("\n\n".join(blocks))
    return "\n\n".join(sections)


def context_paper_ids(context: str) -> list[int]:
    return [int(line.split(":", 1)[1]) for line in context.splitlines() if line.startswith("paper_id: ")]
