import copy
import json

import pytest
import requests

from bibliomap.community import Partition
from bibliomap.embedding import HashingEmbedder
from bibliomap.evaluation import evaluate_instance
from bibliomap.graph import build_graph
from bibliomap.pipelines import (
    GenerationError,
    HTTPGenerator,
    PipelineConfig,
    PipelineFailure,
    PipelineKind,
    TermEchoGenerator,
    build_context,
    render_prompt,
    run_pipeline,
)
from bibliomap.pipelines.context import context_paper_ids


def _run(kind, blocked, generator=None, **kw):
    instance, truth = blocked
    graph = build_graph(instance.papers)
    partition = truth if PipelineKind.parse(kind).uses_partition else None
    return run_pipeline(PipelineConfig(kind), instance, partition, generator or TermEchoGenerator(), graph, **kw)


@pytest.mark.parametrize("kind", [k.value for k in PipelineKind])
def test_every_kind_runs_offline(kind, blocked):
    instance, _ = blocked
    result = _run(kind, blocked)
    assert result.cluster_ids == list(range(1, instance.target_k + 1))
    assert all(e.description for e in result.entries)
    assert result.metadata["model"] == "term-echo"


def test_blind_references_are_free_strings(blocked):
    result = _run("Blind", blocked)
    for entry in result.entries:
        assert entry.references and not entry.references[0].startswith("[")


def test_grounded_references_are_tokens(blocked):
    result = _run("Labeled", blocked)
    assert all(r.startswith("[") for e in result.entries for r in e.references)


class ScriptedGenerator:
    """Replays canned responses and records every prompt."""

    model_id = "scripted"

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def generate(self, prompt):
        self.prompts.append(prompt)
        return self.responses.pop(0)


def test_select_stage_two_sees_only_selected_papers(blocked):
    instance, truth = blocked
    picks = {c: sorted(truth.members(c))[:2] for c in truth.labels}
    stage1 = json.dumps([{"cluster_id": c, "references": [f"[{p}]" for p in ids]} for c, ids in picks.items()])
    stage2 = json.dumps([{"cluster_id": c, "description": f"Cluster {c}."} for c in truth.labels])
    gen = ScriptedGenerator([stage1, stage2])
    result = _run("LabeledSelect", blocked, gen)
    second = gen.prompts[1]
    shown = sorted(context_paper_ids(second))
    assert shown == sorted(p for ids in picks.values() for p in ids)
    for c in truth.labels:
        assert list(result.entry(c).references) == [f"[{p}]" for p in picks[c]]
    assert result.metadata["selected"] == picks


def test_retry_appends_correction_then_succeeds(blocked):
    instance, truth = blocked
    prompt = render_prompt(PipelineConfig("Labeled"), 1, instance, build_context("Labeled", instance, truth))
    good = TermEchoGenerator().generate(prompt)
    gen = ScriptedGenerator(["[]", good])
    result = _run("Labeled", blocked, gen)
    assert len(result) == instance.target_k
    assert "previous response was rejected" in gen.prompts[1]
    assert "previous response was rejected" not in gen.prompts[0]


def test_exhausted_retries_raise_pipeline_failure(blocked):
    gen = ScriptedGenerator(["nope", "[]", "still no"])
    with pytest.raises(PipelineFailure) as err:
        _run("Corpus", blocked, gen)
    assert err.value.raw_outputs == ["nope", "[]", "still no"]


def test_inputs_not_mutated(blocked):
    instance, truth = blocked
    before_inst, before_part = copy.deepcopy(instance), copy.deepcopy(truth)
    _run("Ranked", blocked)
    assert instance == before_inst and truth == before_part


def test_structured_kinds_need_partition(blocked):
    instance, _ = blocked
    with pytest.raises(ValueError):
        run_pipeline(PipelineConfig("Labeled"), instance, None, TermEchoGenerator())
    with pytest.raises(ValueError):
        run_pipeline(PipelineConfig("Ranked"), instance, blocked[1], TermEchoGenerator())


def test_transcript_and_output_files(blocked, tmp_path):
    result = _run("CorpusSelect", blocked, output_path=tmp_path / "d.csv", transcript_path=tmp_path / "t.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert [l["stage"] for l in lines] == [1, 2]
    assert set(lines[0]) == {"run_id", "stage", "attempt", "model", "prompt", "response"}
    assert (tmp_path / "d.csv").read_text().count("\n") == len(result) + 1


def _induced_ari(result, blocked):
    instance, truth = blocked
    graph = build_graph(instance.papers)
    return evaluate_instance(instance, result, result.kind.value, graph, truth, HashingEmbedder()).ari


def test_ranked_term_echo_recovers_structure(blocked):
    assert _induced_ari(_run("Ranked", blocked), blocked) >= 0.8


# --- HTTP generator ------------------------------------------------------------

class FakeResponse:
    def __init__(self, payload, status=200):
        self.payload, self.status_code = payload, status

    def json(self):
        return self.payload

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"HTTP {self.status_code}")


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append((url, json, headers))
        return self.responses.pop(0)


def test_http_generator_payload_and_retry():
    session = FakeSession([FakeResponse({}, 503), FakeResponse({"text": "ok"})])
    gen = HTTPGenerator("http://gen.test", "m1", max_output_tokens=64, api_key="k", session=session, backoff=0)
    assert gen.generate("hello") == "ok"
    url, payload, headers = session.posts[1]
    assert payload == {"model": "m1", "prompt": "hello", "max_tokens": 64}
    assert headers == {"Authorization": "Bearer k"}


def test_http_generator_gives_up():
    session = FakeSession([FakeResponse({"oops": 1})] * 3)
    gen = HTTPGenerator("http://gen.test", "m1", retries=2, session=session, backoff=0)
    with pytest.raises(GenerationError):
        gen.generate("x")
    assert len(session.posts) == 3


def test_shuffled_control_permutes_papers(blocked):
    plain = _run("Labeled", blocked)
    shuffled = _run("Labeled", blocked, TermEchoGenerator(shuffle_seed=3))
    assert [len(e.references) for e in plain.entries] == [len(e.references) for e in shuffled.entries]
    assert sorted(r for e in plain.entries for r in e.references) == sorted(r for e in shuffled.entries for r in e.references)
    assert plain.entries != shuffled.entries


def test_partition_with_wrong_k_still_described(blocked):
    instance, truth = blocked
    merged = Partition({p: min(c, 3) for p, c in truth.assignment.items()})
    result = run_pipeline(PipelineConfig("Labeled"), instance, merged, TermEchoGenerator())
    assert result.cluster_ids == [1, 2, 3] and result.metadata["achieved_k"] == 3
