import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bibliomap.report import (
    HIGHER_IS_BETTER,
    TIE_NOTE,
    aggregate,
    aggregate_rows,
    emit_report,
    read_report_csv,
)
from tests.oracles import aggregate_sort_oracle

PIPELINES = ["Blind", "Corpus", "CorpusSelect", "Labeled", "LabeledSelect", "Ranked"]


def random_fixture(seed, n_pipelines=6, n_instances=20, levels=None):
    rng = np.random.default_rng(seed)
    out = {}
    for i in range(n_instances):
        raw = rng.random(n_pipelines)
        if levels:
            raw = np.round(raw * levels) / levels  # force ties
        out[f"inst{i:02d}"] = {p: float(v) for p, v in zip(PIPELINES[:n_pipelines], raw)}
    return out


def _as_dict(rows):
    return {r.pipeline: (r.mean_rank, r.median, r.win_pct) for r in rows}


def test_dominance_gives_rank_one_and_full_wins():
    values = {f"i{k}": {"A": 1.0, "B": 0.5, "C": 0.1} for k in range(5)}
    got = _as_dict(aggregate(values, "ari"))
    assert got["A"] == (1.0, 1.0, 100.0)
    assert got["C"] == (3.0, 0.1, 0.0)


def test_lower_is_better_reverses_ranks():
    values = {"i": {"A": 1.0, "B": 3.0}}
    got = _as_dict(aggregate(values, "ref_invalid", higher_is_better=False))
    assert got["A"][0] == 1.0 and got["B"][0] == 2.0
    assert HIGHER_IS_BETTER["ref_invalid"] is False


def test_ties_share_average_rank_and_win():
    got = _as_dict(aggregate({"i": {"A": 0.5, "B": 0.5, "C": 0.1}}, "ari"))
    assert got["A"] == got["B"] == (1.5, 0.5, 100.0)
    assert got["C"][0] == 3.0


def test_small_fixture_against_oracle():
    values = {
        "x": {"A": 0.3, "B": 0.9, "C": 0.3, "D": 0.1},
        "y": {"A": 0.8, "B": 0.2, "C": 0.5, "D": 0.5},
        "z": {"A": 0.4, "B": 0.4, "C": 0.4, "D": 0.7},
    }
    assert _as_dict(aggregate(values, "m")) == aggregate_sort_oracle(values)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("levels", [None, 4])
def test_six_by_twenty_fixture_exact(seed, levels):
    values = random_fixture(seed, levels=levels)
    for hib in (True, False):
        assert _as_dict(aggregate(values, "m", hib)) == aggregate_sort_oracle(values, hib)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.permutations(list(range(6))))
def test_pipeline_and_instance_order_invariance(seed, perm):
    values = random_fixture(seed, levels=5)
    reordered = {
        inst: {PIPELINES[j]: values[inst][PIPELINES[j]] for j in perm}
        for inst in reversed(list(values))
    }
    assert _as_dict(aggregate(values, "m")) == _as_dict(aggregate(reordered, "m"))


def test_mean_ranks_sum_to_constant():
    rows = aggregate(random_fixture(3, levels=3), "m")
    assert sum(r.mean_rank for r in rows) == pytest.approx(6 * 7 / 2)


def test_instances_missing_a_pipeline_dropped():
    values = {"a": {"A": 1.0, "B": 0.0}, "b": {"A": 0.0}, "c": {"A": 0.2, "B": float("nan")}}
    rows = aggregate(values, "m")
    assert {r.n_instances for r in rows} == {1}


def test_pipeline_without_any_score_excluded():
    values = {"a": {"A": 1.0, "Human": None}, "b": {"A": 0.5, "Human": None}}
    rows = aggregate(values, "rgc")
    assert [r.pipeline for r in rows] == ["A"] and rows[0].n_instances == 2


def test_no_complete_instance_raises():
    with pytest.raises(ValueError):
        aggregate({"a": {"A": 1.0, "B": None}, "b": {"A": None, "B": 1.0}}, "m")


def _long(values, metric="ari"):
    return [
        {"instance_id": i, "pipeline": p, "metric": metric, "value": v}
        for i, per in values.items() for p, v in per.items()
    ]


def test_emit_csv_round_trip_and_long_file(tmp_path):
    values = random_fixture(1)
    rows = aggregate_rows(_long(values), ["ari"])
    path = emit_report(rows, "csv", tmp_path / "r.csv", long_rows=_long(values))
    assert read_report_csv(path) == sorted(rows, key=lambda r: r.pipeline)
    long_lines = (tmp_path / "r_long.csv").read_text().splitlines()
    assert long_lines[0] == "instance_id,pipeline,metric,value"
    assert len(long_lines) == 1 + 6 * 20


def test_emit_markdown(tmp_path):
    values = {"i": {"A": 0.9, "B": 0.1}}
    rows = aggregate_rows(_long(values), ["ari"])
    text = emit_report(rows, "markdown", tmp_path / "r.md").read_text()
    assert TIE_NOTE in text
    assert "### ari (n=1)" in text
    assert "| A | 1.000 | 0.9000 | 100.00 |" in text


def test_emit_rejects_unknown_format_and_empty(tmp_path):
    rows = aggregate({"i": {"A": 1.0}}, "m")
    with pytest.raises(ValueError):
        emit_report(rows, "html", tmp_path / "r")
    with pytest.raises(ValueError):
        emit_report([], "csv", tmp_path / "r")
