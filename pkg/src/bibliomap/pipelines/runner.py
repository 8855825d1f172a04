"""Run one description pipeline end to end."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

from ..community import DEFAULT_TOP_K, Partition, rank_cluster_papers
from ..corpus import BenchmarkInstance
from ..graph import RelationGraph, RelationMode, link_strength
from .context import DEFAULT_ABSTRACT_BUDGET, build_context, build_selected_context, context_paper_ids
from .generation import Generator, TranscriptLog
from .parsing import ClusterDescription, DescriptionSet, OutputError, SelectionSet, parse_output
from .prompts import RELATION_CONTEXT, PipelineKind, PromptVariant, fill, template_text

logger = logging.getLogger(__name__)

CORRECTION = (
    "\n\nYour previous response was rejected: {error}\n"
    "Return ONLY valid JSON that satisfies every requirement above."
)


class PipelineFailure(RuntimeError):
    def __init__(self, message: str, raw_outputs: list[str]):
        super().__init__(message)
        self.raw_outputs = raw_outputs


@dataclass(frozen=True)
class PipelineConfig:
    kind: PipelineKind
    max_refs_per_cluster: int = 10
    ranked_top_k: int = DEFAULT_TOP_K
    prompt_variant: PromptVariant = PromptVariant.NORMAL
    word_limit: int = 250
    retries: int = 2
    relation: str = "bibliographic coupling"
    abstract_budget: Optional[int] = DEFAULT_ABSTRACT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "kind", PipelineKind.parse(self.kind))
        object.__setattr__(self, "prompt_variant", PromptVariant(self.prompt_variant))
        if self.max_refs_per_cluster < 1 or self.ranked_top_k < 1 or self.word_limit < 1:
            raise ValueError("max_refs_per_cluster, ranked_top_k and word_limit must be positive")

    @classmethod
    def for_mode(cls, kind, mode: RelationMode | str = RelationMode.BC, **kwargs) -> "PipelineConfig":
        relation = "bibliographic coupling" if RelationMode(mode) is RelationMode.BC else "citation analysis"
        return cls(kind, relation=relation, **kwargs)


def render_prompt(
    config: PipelineConfig, stage: int, instance: BenchmarkInstance, context: str,
    cluster_count: Optional[int] = None,
) -> str:
    """Fill the stage template with query, cluster count, limits and context."""
    values = {
        "query": instance.query,
        "target_cluster_count": cluster_count if cluster_count is not None else instance.target_k,
        "word_limit": config.word_limit,
        "max_refs": config.max_refs_per_cluster,
        "relation": config.relation,
        "relation_context": RELATION_CONTEXT.get(config.relation, ""),
        "context": context,
    }
    if config.kind is PipelineKind.BLIND:
        values.pop("context")
    return fill(template_text(config.kind, stage, config.prompt_variant), values)


def _call(generator, prompt, parse, retries, transcript, stage, run_id):
    raw_outputs = []
    current = prompt
    for attempt in range(retries + 1):
        raw = generator.generate(current)
        raw_outputs.append(raw)
        if transcript is not None:
            transcript.record(
                run_id=run_id, stage=stage, attempt=attempt, model=generator.model_id,
                prompt=current, response=raw,
            )
        try:
            return parse(raw)
        except OutputError as exc:
            logger.warning("%s stage %d attempt %d rejected: %s", run_id, stage, attempt, exc)
            current = prompt + CORRECTION.format(error=exc)
    raise PipelineFailure(f"{run_id}: stage {stage} output invalid after {retries + 1} attempts", raw_outputs)


def run_pipeline(
    config: PipelineConfig,
    instance: BenchmarkInstance,
    partition: Optional[Partition],
    generator: Generator,
    graph: Optional[RelationGraph] = None,
    output_path=None,
    transcript_path=None,
) -> DescriptionSet:
    """Generate cluster descriptions for one instance.

    Structured kinds describe the given partition's clusters; Ranked also
    needs ``graph`` to rank papers by link strength.
    """
    kind = config.kind
    run_id = f"{instance.instance_id}/{kind.value}"
    transcript = TranscriptLog(transcript_path) if transcript_path else None
    metadata: dict[str, object] = {"model": generator.model_id, "prompt_variant": config.prompt_variant.value}

    ranking = None
    if kind.uses_partition:
        if partition is None:
            raise ValueError(f"{kind.value} requires a partition")
        expected = partition.labels
        if partition.k != instance.target_k:
            logger.warning("%s: partition has k=%d, target_k=%d", run_id, partition.k, instance.target_k)
        metadata["achieved_k"] = partition.k
        members = partition.clusters()
        if kind is PipelineKind.RANKED:
            if graph is None:
                raise ValueError("Ranked requires the relation graph for link strength")
            ranking = rank_cluster_papers(partition, link_strength(graph), config.ranked_top_k)
    else:
        expected = list(range(1, instance.target_k + 1))
        members = None

    context = build_context(kind, instance, partition, ranking, config.abstract_budget)
    context_ids = set(context_paper_ids(context)) if kind.uses_corpus else None
    prompt = render_prompt(config, 1, instance, context, len(expected))

    if kind.stages == 1:
        result = _call(
            generator, prompt,
            lambda raw: parse_output(raw, expected, kind, 1, context_ids, members, config.max_refs_per_cluster),
            config.retries, transcript, 1, run_id,
        )
    else:
        selection: SelectionSet = _call(
            generator, prompt,
            lambda raw: parse_output(raw, expected, kind, 1, context_ids, members, config.max_refs_per_cluster),
            config.retries, transcript, 1, run_id,
        )
        reduced = build_selected_context(
            instance, selection.selections, labeled=kind is PipelineKind.LABELED_SELECT,
            abstract_budget=config.abstract_budget,
        )
        metadata["selected"] = {c: list(ids) for c, ids in selection.selections.items()}
        prompt2 = render_prompt(config, 2, instance, reduced, len(expected))
        described: DescriptionSet = _call(
            generator, prompt2,
            lambda raw: parse_output(raw, expected, kind, 2, None, None, config.max_refs_per_cluster),
            config.retries, transcript, 2, run_id,
        )
        result = DescriptionSet(
            tuple(
                replace(e, references=tuple(f"[{p}]" for p in selection.selections[e.cluster_id]))
                for e in described.entries
            ),
            kind,
        )

    result = DescriptionSet(result.entries, kind, metadata)
    if output_path is not None:
        result.write_csv(output_path)
    return result


__all__ = [
    "ClusterDescription",
    "PipelineConfig",
    "PipelineFailure",
    "render_prompt",
    "run_pipeline",
]
