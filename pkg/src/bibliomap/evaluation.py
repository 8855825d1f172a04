"""Metrics for generated cluster descriptions.

Human alignment (optimal one-to-one matching), semantic coverage, induced
partition quality (ARI, silhouette, modularity) and reference grounding.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .community import Partition, modularity
from .corpus import BenchmarkInstance, NormalizationError, normalize_reference
from .embedding import EmbeddingProvider, pairwise_similarity, split_atoms
from .graph import RelationGraph
from .pipelines.parsing import DescriptionSet
from .pipelines.prompts import PipelineKind
from .resolver import RecordResolver, match_criteria

logger = logging.getLogger(__name__)

_TOKEN_FULL_RE = re.compile(r"\s*\[\s*(\d+)\s*\]\s*")


# --- human alignment -------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    total: float

    @property
    def mean(self) -> float:
        return self.total / len(self.pairs)


def optimal_alignment(matrix) -> Assignment:
    """Maximum-total one-to-one matching of generated rows to human columns."""
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
        raise ValueError(f"alignment matrix must be square and non-empty, got shape {mat.shape}")
    rows, cols = linear_sum_assignment(mat, maximize=True)
    pairs = tuple((int(r), int(c)) for r, c in zip(rows, cols))
    return Assignment(pairs, float(sum(mat[r, c] for r, c in pairs)))


class PairwiseScorer(Protocol):
    scorer_id: str

    def score_matrix(self, candidates: Sequence[str], references: Sequence[str]) -> np.ndarray: ...


def _rescale(values: np.ndarray, baseline: Optional[float]) -> np.ndarray:
    if baseline is None:
        return values
    return (values - baseline) / (1.0 - baseline)


class SentenceCosineScorer:
    """Cosine of whole-text sentence embeddings."""

    def __init__(self, provider: EmbeddingProvider, baseline: Optional[float] = None):
        self.provider = provider
        self.baseline = baseline
        self.scorer_id = f"sentence-cosine:{provider.provider_id}/{provider.model_id}"

    def score_matrix(self, candidates, references) -> np.ndarray:
        a = self.provider.embed_texts(list(candidates))
        b = self.provider.embed_texts(list(references))
        return _rescale(pairwise_similarity(a, b), self.baseline)


class TokenMatchScorer:
    """Greedy token matching F1 over per-token embeddings (BERTScore-style).

    Precision averages, over candidate tokens, the best cosine to any
    reference token; recall does the same the other way round.
    """

    def __init__(self, provider, baseline: Optional[float] = None):
        if not hasattr(provider, "token_vectors"):
            raise TypeError("provider does not expose token embeddings")
        self.provider = provider
        self.baseline = baseline
        self.scorer_id = f"token-f1:{provider.provider_id}/{provider.model_id}"

    def f1(self, candidate: str, reference: str) -> float:
        c = self.provider.token_vectors(candidate)
        r = self.provider.token_vectors(reference)
        if len(c) == 0 or len(r) == 0:
            return 0.0
        sim = c @ r.T
        precision = sim.max(axis=1).mean()
        recall = sim.max(axis=0).mean()
        if precision + recall <= 0:
            return 0.0
        return float(2 * precision * recall / (precision + recall))

    def score_matrix(self, candidates, references) -> np.ndarray:
        out = np.array([[self.f1(c, r) for r in references] for c in candidates], dtype=np.float64)
        return _rescale(out, self.baseline)


def default_scorer(provider, baseline: Optional[float] = None) -> PairwiseScorer:
    if hasattr(provider, "token_vectors"):
        return TokenMatchScorer(provider, baseline)
    return SentenceCosineScorer(provider, baseline)


def human_alignment(
    generated: Sequence[str], human: Sequence[str], scorer: PairwiseScorer
) -> Assignment:
    return optimal_alignment(scorer.score_matrix(generated, human))


# --- coverage ----------------------------------------------------------------

def semantic_coverage(corpus_vectors, description_vectors) -> float:
    """Mean over corpus atoms of the best cosine to any description atom."""
    s = np.atleast_2d(np.asarray(corpus_vectors, dtype=np.float64))
    b = np.atleast_2d(np.asarray(description_vectors, dtype=np.float64))
    if s.size == 0 or b.size == 0:
        raise ValueError("coverage needs at least one corpus atom and one description atom")
    return float(pairwise_similarity(s, b).max(axis=1).mean())


def corpus_atoms(instance: BenchmarkInstance, min_chars: Optional[int] = None):
    kwargs = {} if min_chars is None else {"min_chars": min_chars}
    return [a for p in instance.papers if p.abstract.strip() for a in split_atoms(p.abstract, p.paper_id, **kwargs)]


def description_atoms(descriptions: DescriptionSet, min_chars: Optional[int] = None):
    kwargs = {} if min_chars is None else {"min_chars": min_chars}
    return [a for e in descriptions for a in split_atoms(e.text, e.cluster_id, **kwargs)]


# --- induced partition -------------------------------------------------------

def induce_partition(
    paper_ids: Sequence[int], paper_vectors, cluster_ids: Sequence[int], description_vectors
) -> Partition:
    """Assign each paper to its most similar description; ties go to the lowest cluster id."""
    if len(cluster_ids) == 0:
        raise ValueError("need at least one description")
    order = np.argsort(np.asarray(cluster_ids), kind="stable")
    sorted_ids = np.asarray(cluster_ids)[order]
    sims = pairwise_similarity(paper_vectors, np.asarray(description_vectors)[order])
    best = np.argmax(sims, axis=1)
    return Partition({int(pid): int(sorted_ids[j]) for pid, j in zip(paper_ids, best)})


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(a: Partition, b: Partition) -> float:
    """Adjusted Rand index from the contingency table."""
    if set(a.assignment) != set(b.assignment):
        raise ValueError("partitions cover different node sets")
    nodes = sorted(a.assignment)
    _, la = np.unique([a.assignment[n] for n in nodes], return_inverse=True)
    _, lb = np.unique([b.assignment[n] for n in nodes], return_inverse=True)
    table = np.zeros((la.max() + 1, lb.max() + 1))
    np.add.at(table, (la, lb), 1)
    sum_cells = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(len(nodes))
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all-in-one or all singletons) in the same way
        return 1.0 if sum_cells == expected else 0.0
    return float((sum_cells - expected) / (max_index - expected))


def silhouette(vectors, labels: Sequence[int]) -> float:
    """Mean silhouette under cosine distance; singleton clusters score 0."""
    x = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.where(norms == 0, 1.0, norms)
    dist = np.clip(1.0 - x @ x.T, 0.0, 2.0)
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def induced_modularity(graph: RelationGraph, induced: Partition) -> float:
    return modularity(graph, induced)


# --- reference grounding -----------------------------------------------------

@dataclass(frozen=True)
class ReferenceCounts:
    in_corpus: int = 0
    out_corpus_valid: int = 0
    invalid: int = 0
    unresolved: int = 0

    @property
    def total(self) -> int:
        return self.in_corpus + self.out_corpus_valid + self.invalid + self.unresolved


def _token_id(ref: str) -> Optional[int]:
    m = _TOKEN_FULL_RE.fullmatch(ref)
    return int(m.group(1)) if m else None


def classify_references(
    descriptions: DescriptionSet,
    instance: BenchmarkInstance,
    resolver: Optional[RecordResolver] = None,
    threshold: float = 80.0,
) -> ReferenceCounts:
    """Split every generated reference into in-corpus, out-of-corpus valid, invalid or unresolved."""
    ids = set(instance.paper_ids)
    counts = {"in_corpus": 0, "out_corpus_valid": 0, "invalid": 0, "unresolved": 0}
    for ref in descriptions.all_references():
        pid = _token_id(ref)
        if pid is not None:
            counts["in_corpus" if pid in ids else "invalid"] += 1
            continue
        if resolver is None:
            counts["unresolved"] += 1
            continue
        try:
            result = resolver.search_best(ref)
        except NormalizationError:
            counts["invalid"] += 1
            continue
        if result.status == "unresolved":
            counts["unresolved"] += 1
        elif result.matched and result.score >= threshold:
            counts["out_corpus_valid"] += 1
        else:
            counts["invalid"] += 1
    return ReferenceCounts(**counts)


@dataclass(frozen=True)
class BlindPrecision:
    title: float
    title_year: float
    title_year_author: float
    checked: int
    unresolved: int = 0


def validate_blind_references(
    references: Sequence[str], resolver: RecordResolver, threshold: float = 80.0
) -> BlindPrecision:
    """Precision of free-text references under nested title / +year / +first-author criteria."""
    hits = np.zeros(3)
    checked = unresolved = 0
    for ref in references:
        try:
            key = normalize_reference(ref)
        except NormalizationError:
            checked += 1
            continue
        result = resolver.search_best(ref)
        if result.status == "unresolved":
            unresolved += 1
            continue
        checked += 1
        if not result.matched:
            continue
        crit = match_criteria(key, result.record, result.score, threshold)
        hits += [crit.title, crit.title_year, crit.title_year_author]
    if checked == 0:
        return BlindPrecision(math.nan, math.nan, math.nan, 0, unresolved)
    p = hits / checked
    return BlindPrecision(float(p[0]), float(p[1]), float(p[2]), checked, unresolved)


@dataclass(frozen=True)
class GroundedCoverage:
    score: Optional[float]
    per_cluster: dict = field(default_factory=dict)
    excluded: int = 0


def reference_grounded_coverage(
    descriptions: DescriptionSet,
    instance: BenchmarkInstance,
    provider: EmbeddingProvider,
    min_chars: Optional[int] = None,
) -> GroundedCoverage:
    """Coverage of each cluster's cited abstracts by that cluster's own description."""
    by_id = instance.by_id()
    kwargs = {} if min_chars is None else {"min_chars": min_chars}
    per_cluster = {}
    excluded = 0
    for entry in descriptions:
        cited = [by_id[p] for p in dict.fromkeys(entry.cited_ids()) if p in by_id and by_id[p].abstract.strip()]
        evidence = [a for p in cited for a in split_atoms(p.abstract, p.paper_id, **kwargs)]
        own = split_atoms(entry.text, entry.cluster_id, **kwargs)
        if not evidence or not own:
            excluded += 1
            continue
        e = provider.embed_texts([a.text for a in evidence])
        b = provider.embed_texts([a.text for a in own])
        per_cluster[entry.cluster_id] = semantic_coverage(e, b)
    if not per_cluster:
        return GroundedCoverage(None, {}, excluded)
    return GroundedCoverage(float(np.mean(list(per_cluster.values()))), per_cluster, excluded)


# --- per-instance scoring ----------------------------------------------------

METRICS = ("coverage", "silhouette", "ari", "modularity", "human_alignment", "rgc")
COUNT_METRICS = ("ref_in_corpus", "ref_out_corpus_valid", "ref_invalid", "ref_unresolved")
BLIND_METRICS = ("blind_precision_title", "blind_precision_title_year", "blind_precision_title_year_author")


@dataclass(frozen=True)
class InstanceScores:
    instance_id: str
    pipeline: str
    coverage: float
    silhouette: float
    ari: float
    modularity: float
    human_alignment: Optional[float] = None
    rgc: Optional[float] = None
    reference_counts: ReferenceCounts = ReferenceCounts()
    blind_precision: Optional[BlindPrecision] = None
    provenance: dict = field(default_factory=dict, compare=False)

    def metric_values(self) -> dict[str, Optional[float]]:
        values = {m: getattr(self, m) for m in METRICS}
        rc = self.reference_counts
        values.update(
            ref_in_corpus=rc.in_corpus, ref_out_corpus_valid=rc.out_corpus_valid,
            ref_invalid=rc.invalid, ref_unresolved=rc.unresolved,
        )
        if self.blind_precision is not None:
            bp = self.blind_precision
            values.update(
                blind_precision_title=bp.title, blind_precision_title_year=bp.title_year,
                blind_precision_title_year_author=bp.title_year_author,
            )
        return values


def evaluate_instance(
    instance: BenchmarkInstance,
    descriptions: DescriptionSet,
    pipeline: str,
    graph: RelationGraph,
    reference_partition: Partition,
    provider: EmbeddingProvider,
    resolver: Optional[RecordResolver] = None,
    scorer: Optional[PairwiseScorer] = None,
) -> InstanceScores:
    """Score one DescriptionSet against the corpus, its graph and the Louvain partition."""
    papers = sorted(instance.papers, key=lambda p: p.paper_id)
    entries = sorted(descriptions, key=lambda e: e.cluster_id)
    desc_vecs = provider.embed_texts([e.text for e in entries])
    paper_vecs = provider.embed_texts([p.text for p in papers])

    s_atoms = corpus_atoms(instance)
    b_atoms = description_atoms(descriptions)
    coverage = math.nan
    if s_atoms and b_atoms:
        coverage = semantic_coverage(
            provider.embed_texts([a.text for a in s_atoms]), provider.embed_texts([a.text for a in b_atoms])
        )

    induced = induce_partition([p.paper_id for p in papers], paper_vecs, [e.cluster_id for e in entries], desc_vecs)
    common = set(reference_partition.assignment)
    induced_common = Partition({n: c for n, c in induced.assignment.items() if n in common})
    ari_value = ari(induced_common, Partition({n: reference_partition.assignment[n] for n in induced_common.assignment}))

    with_abstract = [i for i, p in enumerate(papers) if p.abstract.strip()]
    labels = [induced.assignment[papers[i].paper_id] for i in with_abstract]
    sil = math.nan
    if len(set(labels)) >= 2:
        sil = silhouette(paper_vecs[with_abstract], labels)

    graph_nodes = set(graph.nodes)
    q = induced_modularity(graph, Partition({n: c for n, c in induced.assignment.items() if n in graph_nodes}))

    human = None
    scorer_id = None
    if instance.human_descriptions:
        scorer = scorer or default_scorer(provider)
        scorer_id = scorer.scorer_id
        if len(entries) == len(instance.human_descriptions):
            human = human_alignment([e.text for e in entries], instance.human_descriptions, scorer).mean
        else:
            logger.warning(
                "%s/%s: %d descriptions vs %d human descriptions; skipping alignment",
                instance.instance_id, pipeline, len(entries), len(instance.human_descriptions),
            )

    kind = None
    try:
        kind = PipelineKind.parse(pipeline)
    except ValueError:
        pass
    rgc = None
    if kind is not None and kind is not PipelineKind.BLIND:
        rgc = reference_grounded_coverage(descriptions, instance, provider).score
    counts = classify_references(descriptions, instance, resolver)
    blind = None
    if kind is PipelineKind.BLIND and resolver is not None:
        blind = validate_blind_references(descriptions.all_references(), resolver)

    return InstanceScores(
        instance_id=instance.instance_id,
        pipeline=pipeline,
        coverage=coverage,
        silhouette=sil,
        ari=ari_value,
        modularity=q,
        human_alignment=human,
        rgc=rgc,
        reference_counts=counts,
        blind_precision=blind,
        provenance={
            "embedding_provider": provider.provider_id,
            "embedding_model": provider.model_id,
            "scorer": scorer_id or "",
            "resolver": getattr(resolver, "resolver_id", "") if resolver else "",
        },
    )


SCORE_COLUMNS = ("instance_id", "pipeline", "metric", "value", "embedding_provider", "embedding_model", "scorer", "resolver")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_scores_csv(scores: Sequence[InstanceScores], path) -> None:
    """Long format: one row per (instance, pipeline, metric)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORE_COLUMNS)
        for s in scores:
            prov = s.provenance
            for metric, value in s.metric_values().items():
                writer.writerow(
                    [s.instance_id, s.pipeline, metric, _fmt(value),
                     prov.get("embedding_provider", ""), prov.get("embedding_model", ""),
                     prov.get("scorer", ""), prov.get("resolver", "")]
                )


def read_scores_csv(path) -> list[dict]:
    """Rows as dicts with ``value`` parsed to float (None when absent)."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            raw = row["value"].strip()
            row["value"] = float(raw) if raw else None
            rows.append(row)
    return rows
