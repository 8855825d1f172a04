import os
from pathlib import Path

import pytest

from bibliomap.community import Partition, rank_cluster_papers
from bibliomap.corpus import BenchmarkInstance, PaperRecord
from bibliomap.graph import build_graph, link_strength
from bibliomap.pipelines import PipelineConfig, PipelineKind, PromptVariant, TemplateError, build_context, render_prompt
from bibliomap.pipelines.context import build_selected_context, context_paper_ids
from bibliomap.pipelines.prompts import fill, template_text

SNAPSHOTS = Path(__file__).parent / "snapshots"
UPDATE = bool(os.environ.get("BIBLIOMAP_UPDATE_SNAPSHOTS"))

STAGES = [(k, s) for k in PipelineKind for s in range(1, k.stages + 1)]


def tiny_instance():
    papers = (
        PaperRecord(1, "Digital twins in manufacturing", "Twins mirror factories."),
        PaperRecord(2, "Digital twins for health", "Patients get virtual replicas."),
        PaperRecord(3, "Sensor fusion for twins", "Sensors stream data."),
    )
    return BenchmarkInstance("tiny", "digital twins", papers, 2)


TINY_PARTITION = Partition({1: 1, 2: 2, 3: 1})


def _render(kind, stage, variant="normal"):
    inst = tiny_instance()
    config = PipelineConfig(kind, prompt_variant=variant)
    ranking = rank_cluster_papers(TINY_PARTITION, {1: 2.0, 2: 1.0, 3: 3.0}) if kind is PipelineKind.RANKED else None
    if stage == 1:
        context = build_context(kind, inst, TINY_PARTITION if kind.uses_partition else None, ranking)
    else:
        context = build_selected_context(inst, {1: (1, 3), 2: (2,)}, labeled=kind is PipelineKind.LABELED_SELECT)
    return render_prompt(config, stage, inst, context)


@pytest.mark.parametrize("variant", [v.value for v in PromptVariant])
@pytest.mark.parametrize("kind,stage", STAGES, ids=[f"{k.value}-{s}" for k, s in STAGES])
def test_prompt_snapshot(kind, stage, variant):
    text = _render(kind, stage, variant)
    assert text == _render(kind, stage, variant)
    path = SNAPSHOTS / f"{kind.value}_{stage}_{variant}.txt"
    if UPDATE or not path.exists():
        if not UPDATE:
            pytest.fail(f"missing snapshot {path.name}; rerun with BIBLIOMAP_UPDATE_SNAPSHOTS=1")
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


def test_blind_prompt_states_count_and_query():
    inst = BenchmarkInstance("x", "digital twins", (PaperRecord(1, "T"),), 3)
    text = render_prompt(PipelineConfig("Blind"), 1, inst, "")
    assert "exactly 3" in text
    assert "digital twins" in text
    assert "{{" not in text


def test_no_query_variant_omits_query_block():
    text = _render(PipelineKind.CORPUS, 1, "no_query")
    assert "digital twins\n" not in text.split("Scopus records:")[0]
    assert "Query/context:" not in text


def test_biblio_context_variant_adds_relation_context():
    plain = _render(PipelineKind.LABELED, 1)
    rich = _render(PipelineKind.LABELED, 1, "biblio_context")
    assert "shares cited references" in rich or "share cited references" in rich
    assert "share cited references" not in plain


def test_ranked_prompt_mentions_link_strength_and_relation():
    text = _render(PipelineKind.RANKED, 1)
    assert "link strength" in text
    assert "bibliographic coupling clusters" in text


def test_citation_relation_rendered():
    inst = tiny_instance()
    config = PipelineConfig.for_mode("Ranked", "CIT")
    text = render_prompt(config, 1, inst, "ctx")
    assert "citation analysis clusters" in text


def test_fill_rejects_missing_placeholder():
    with pytest.raises(TemplateError):
        fill("Hello {{name}} and {{other}}", {"name": "x"})
    assert fill("{{a}}{{b}}", {"a": "{{b}}", "b": "2"}) == "{{b}}2"


def test_unknown_stage_rejected():
    with pytest.raises(TemplateError):
        template_text(PipelineKind.BLIND, 2)


def test_kind_parsing():
    assert PipelineKind.parse("labeled-select") is PipelineKind.LABELED_SELECT
    assert PipelineKind.parse("CORPUS_SELECT") is PipelineKind.CORPUS_SELECT
    with pytest.raises(ValueError):
        PipelineKind.parse("Hybrid")


# --- contexts -------------------------------------------------------------------

def test_corpus_context_two_papers_no_labels():
    papers = (PaperRecord(2, "B", "b."), PaperRecord(1, "A", "a."))
    ctx = build_context(PipelineKind.CORPUS, BenchmarkInstance("x", "q", papers, 1))
    assert context_paper_ids(ctx) == [1, 2]
    assert "cluster_id" not in ctx


def test_blind_context_empty():
    assert build_context(PipelineKind.BLIND, tiny_instance()) == ""


def test_labeled_context_carries_labels():
    ctx = build_context(PipelineKind.LABELED, tiny_instance(), TINY_PARTITION)
    blocks = ctx.split("\n\n")
    assert len(blocks) == 3
    for block in blocks:
        pid = int(block.splitlines()[0].split(": ")[1])
        assert f"cluster_id: {TINY_PARTITION.assignment[pid]}" in block


def test_ranked_context_top_ten_per_cluster(blocked):
    instance, truth = blocked
    graph = build_graph(instance.papers)
    ranking = rank_cluster_papers(truth, link_strength(graph), 10)
    ctx = build_context(PipelineKind.RANKED, instance, truth, ranking)
    ids = context_paper_ids(ctx)
    assert len(ids) <= 40
    sections = ctx.split("### Cluster ")[1:]
    assert len(sections) == 4
    for section in sections:
        cluster = int(section.split(" ", 1)[0])
        got = context_paper_ids(section)
        assert len(got) == min(len(truth.members(cluster)), 10)


def test_abstract_budget_truncates():
    inst = BenchmarkInstance("x", "q", (PaperRecord(1, "T", "word " * 1000),), 1)
    ctx = build_context(PipelineKind.CORPUS, inst, abstract_budget=100)
    assert len(ctx) < 200 and ctx.endswith("...")


def test_labeled_context_requires_partition():
    with pytest.raises(ValueError):
        build_context(PipelineKind.LABELED, tiny_instance())
