"""Prompt templates for the six description pipelines."""

from __future__ import annotations

import enum
import re
from typing import Mapping


class PipelineKind(str, enum.Enum):
    BLIND = "Blind"
    CORPUS = "Corpus"
    CORPUS_SELECT = "CorpusSelect"
    LABELED = "Labeled"
    LABELED_SELECT = "LabeledSelect"
    RANKED = "Ranked"

    @property
    def stages(self) -> int:
        return 2 if self in (PipelineKind.CORPUS_SELECT, PipelineKind.LABELED_SELECT) else 1

    @property
    def uses_partition(self) -> bool:
        return self in (PipelineKind.LABELED, PipelineKind.LABELED_SELECT, PipelineKind.RANKED)

    @property
    def uses_corpus(self) -> bool:
        return self is not PipelineKind.BLIND

    @classmethod
    def parse(cls, value: "str | PipelineKind") -> "PipelineKind":
        if isinstance(value, cls):
            return value
        wanted = re.sub(r"[^a-z]", "", str(value).lower())
        for kind in cls:
            if kind.value.lower() == wanted:
                return kind
        raise ValueError(f"unknown pipeline kind {value!r}")


class PromptVariant(str, enum.Enum):
    NORMAL = "normal"
    BIBLIO_CONTEXT = "biblio_context"
    NO_QUERY = "no_query"


class TemplateError(KeyError):
    pass


RELATION_LINE = "This task is specifically based on {{relation}}, not general bibliometric analysis."

RELATION_CONTEXT = {
    "bibliographic coupling": (
        "The analysis that will be performed is a bibliographic coupling analysis. "
        "Bibliographic coupling clusters papers that share cited references. "
        "Papers in the same cluster often reflect related intellectual backgrounds, "
        "methods, or problem framings."
    ),
    "citation analysis": (
        "The analysis that will be performed is a citation analysis. "
        "Citation analysis clusters papers that are linked by direct citations. "
        "Papers in the same cluster often build directly on one another's "
        "contributions, methods, or problem framings."
    ),
}

_EXPERT = "You are an expert in bibliometrics and scientific literature analysis."

# (opening line, query label, body, context label, context placeholder)
_BLIND = (
    "You are an expert research analyst in bibliometrics.",
    "Query:",
    """Task:
Identify exactly {{target_cluster_count}} coherent thematic clusters within this research topic.
The number of clusters must exactly match the human reference clustering.
Use cluster_id values 1 through {{target_cluster_count}}.

For each cluster:
- write a precise academic description of the theme, main lines of inquiry, and distinctive focus
- use less than {{word_limit}} words to describe the cluster
- provide references from your prior knowledge only
- use no more than {{max_refs}} references per cluster
- do not browse or claim internet access
- do not invent references if uncertain

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description, references
- references must be an array of bibliographic strings
- cluster_id must be numeric""",
    None,
)

_CORPUS = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the Scopus records below.
Identify exactly {{target_cluster_count}} thematic clusters supported by this corpus, describe each cluster, and select the most relevant papers for each cluster in the same response.
The number of clusters must exactly match the human reference clustering.
Use cluster_id values 1 through {{target_cluster_count}}.
Use less than {{word_limit}} words to describe each cluster.

Reference rules:
- every reference must be written exactly as [#]
- # must correspond to one of the provided paper_id values
- only cite papers from the provided Scopus records
- only select papers that are truly relevant for describing the cluster
- use no more than {{max_refs}} references per cluster

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description, references
- references must be an array of [#] tokens""",
    "Scopus records:",
)

_CORPUS_SELECT_1 = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the Scopus records below.
Identify exactly {{target_cluster_count}} thematic clusters and select the most relevant papers for each cluster.
The number of clusters must exactly match the human reference clustering.
Use cluster_id values 1 through {{target_cluster_count}}.

Reference rules:
- every reference must be written exactly as [#]
- # must correspond to one of the provided paper_id values
- only select papers that are truly relevant for describing the cluster
- use no more than {{max_refs}} references per cluster

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, references
- references must be an array of [#] tokens""",
    "Scopus records:",
)

_CORPUS_SELECT_2 = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the selected cluster papers below.
Write one academic description for each of the exactly {{target_cluster_count}} clusters.
Use cluster_id values 1 through {{target_cluster_count}}.
Use less than {{word_limit}} words to describe each cluster.

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description
- do not include references in this step""",
    "Selected cluster papers:",
)

_LABELED = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the labeled Scopus records below.
Each paper already has a cluster label, and you must preserve those labels.
Write one academic description for each of the exactly {{target_cluster_count}} labeled clusters using the whole labeled corpus as context.
Use less than {{word_limit}} words to describe each cluster.

Reference rules:
- every reference must be written exactly as [#]
- use only the provided paper_id values
- do not cite papers outside the labeled Scopus records
- use no more than {{max_refs}} references per cluster

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description, references
- cluster_id must match one of the provided labeled cluster values
- references must be an array of [#] tokens""",
    "Labeled Scopus records:",
)

_LABELED_SELECT_1 = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the labeled Scopus records below.
Each paper already has a cluster label, and you must preserve those labels.
Select the papers that are most relevant for writing a representative description for each of the exactly {{target_cluster_count}} labeled clusters.

Reference rules:
- every reference must be written exactly as [#]
- use only the provided paper_id values
- for each cluster_id, only select papers that belong to that same labeled cluster
- use no more than {{max_refs}} references per cluster

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, references
- cluster_id must match one of the provided labeled cluster values
- references must be an array of [#] tokens""",
    "Labeled Scopus records:",
)

# Stage 2 of the labeled flow reuses the corpus-select writing step with labels preserved.
_LABELED_SELECT_2 = (
    _EXPERT,
    "Query/context:",
    """Use ONLY the selected cluster papers below.
Each cluster already has a label, and you must preserve those labels.
Write one academic description for each of the exactly {{target_cluster_count}} labeled clusters.
Use less than {{word_limit}} words to describe each cluster.

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description
- cluster_id must match one of the provided labeled cluster values
- do not include references in this step""",
    "Selected cluster papers:",
)

_RANKED = (
    "You are an expert research analyst writing bibliometric cluster descriptions.",
    "Query/context:",
    """You will be provided multiple {{relation}} clusters at once.
For each cluster, you will receive the top papers of that cluster ranked by link strength.
Use ONLY the selected cluster papers below, and preserve the provided cluster labels.

Your task:
Write one coherent academic description for each of the exactly {{target_cluster_count}} clusters.

Strict rules:
- use ONLY the information provided below
- do NOT introduce external knowledge or invent papers, methods, findings, datasets, journals, years, or topics
- base all statements strictly on patterns visible in the provided titles and abstracts
- identify the main research theme of each cluster
- emphasize the topic, subtheme, angle, or intellectual profile that makes each cluster distinctive relative to the others in this set
- do not infer distinctions that are not clearly supported by the provided information
- use less than {{word_limit}} words to describe each cluster
- every reference must be written exactly as [#]
- use only the provided paper_id values
- each cluster description must cite at least 3 different papers from that same cluster when enough papers are available
- use no more than {{max_refs}} references per cluster
- write each cluster description as one dense academic paragraph or two short paragraphs

Output requirements:
- return ONLY valid JSON
- return a JSON array with exactly {{target_cluster_count}} objects
- each object must contain: cluster_id, description, references
- cluster_id must match one of the provided cluster labels
- references must be an array of [#] tokens""",
    "Selected cluster papers:",
)

TEMPLATES = {
    (PipelineKind.BLIND, 1): _BLIND,
    (PipelineKind.CORPUS, 1): _CORPUS,
    (PipelineKind.CORPUS_SELECT, 1): _CORPUS_SELECT_1,
    (PipelineKind.CORPUS_SELECT, 2): _CORPUS_SELECT_2,
    (PipelineKind.LABELED, 1): _LABELED,
    (PipelineKind.LABELED_SELECT, 1): _LABELED_SELECT_1,
    (PipelineKind.LABELED_SELECT, 2): _LABELED_SELECT_2,
    (PipelineKind.RANKED, 1): _RANKED,
}

_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


def template_text(kind: PipelineKind, stage: int, variant: PromptVariant = PromptVariant.NORMAL) -> str:
    """Unfilled template for one pipeline stage under a prompt variant."""
    try:
        opening, query_label, body, context_label = TEMPLATES[(kind, stage)]
    except KeyError:
        raise TemplateError(f"{kind.value} has no stage {stage}") from None
    variant = PromptVariant(variant)
    blocks = [opening, RELATION_LINE]
    if variant is PromptVariant.BIBLIO_CONTEXT:
        blocks.append("{{relation_context}}")
    if variant is not PromptVariant.NO_QUERY:
        blocks.append(f"{query_label}\n{{{{query}}}}")
    blocks.append(body)
    if context_label:
        blocks.append(f"{context_label}\n{{{{context}}}}")
    return "\n\n".join(blocks) + "\n"


def fill(template: str, values: Mapping[str, object]) -> str:
    """Substitute every {{name}}; a placeholder without a value is an error."""
    missing = sorted({m.group(1) for m in _PLACEHOLDER_RE.finditer(template)} - set(values))
    if missing:
        raise TemplateError(f"no value for placeholder(s): {', '.join(missing)}")
    # single pass so substituted text is never re-scanned
    return _PLACEHOLDER_RE.sub(lambda m: str(values[m.group(1)]), template)
