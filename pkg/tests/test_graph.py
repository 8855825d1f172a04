import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bibliomap.corpus import PaperRecord
from bibliomap.graph import (
    RelationGraph,
    RelationMode,
    association_strength,
    build_graph,
    citation_graph,
    coupling_graph,
    link_strength,
    read_edge_list,
    threshold_edges,
    write_edge_list,
)


def _ref(title):
    return f"Someone, A. (2000). {title}. Journal."


def _paper(pid, titles=(), cites=()):
    return PaperRecord(pid, f"Paper {pid}", raw_references=tuple(_ref(t) for t in titles),
                       cited_in_corpus=frozenset(cites))


def test_coupling_weight_is_shared_reference_count():
    g = coupling_graph([_paper(1, "abc"), _paper(2, "bcd")])
    assert g.weight(1, 2) == 2


def test_disjoint_references_no_edge():
    g = coupling_graph([_paper(1, "ab"), _paper(2, "cd")])
    assert g.edges == {}


def test_five_identical_references():
    g = coupling_graph([_paper(1, ["r1", "r2", "r3", "r4", "r5"]), _paper(2, ["r1", "r2", "r3", "r4", "r5"])])
    assert g.weight(1, 2) == 5


def test_coupling_matches_set_intersection_oracle():
    rng = np.random.default_rng(3)
    pool = [f"ref title {i}" for i in range(15)]
    papers = [_paper(i, list(rng.choice(pool, size=5, replace=False))) for i in range(1, 9)]
    g = coupling_graph(papers)
    for a, b in itertools.combinations(papers, 2):
        shared = len({r for r in a.raw_references} & {r for r in b.raw_references})
        assert g.weight(a.paper_id, b.paper_id) == shared


def test_citation_one_way_mutual_and_none():
    g = citation_graph([_paper(1, cites={2}), _paper(2), _paper(3, cites={4}), _paper(4, cites={3}), _paper(5)])
    assert g.weight(1, 2) == 1
    assert g.weight(3, 4) == 2
    assert g.neighbors(5) == {}


def test_symmetric_queries():
    g = coupling_graph([_paper(1, "abc"), _paper(2, "bcd")])
    assert g.weight(1, 2) == g.weight(2, 1)


def test_triangle_association_strength():
    g = RelationGraph(RelationMode.BC, (1, 2, 3), {(1, 2): 1.0, (1, 3): 1.0, (2, 3): 1.0})
    assert link_strength(g) == {1: 2.0, 2: 2.0, 3: 2.0}
    norm = association_strength(g)
    assert all(w == 0.25 for w in norm.edges.values())
    assert norm.normalized


def test_single_edge_association_strength_and_isolated_node():
    g = RelationGraph(RelationMode.BC, (1, 2, 3), {(1, 2): 4.0})
    norm = association_strength(g)
    assert norm.weight(1, 2) == 0.25
    assert norm.neighbors(3) == {}
    assert norm.nodes == (1, 2, 3)


def test_double_normalization_rejected():
    g = association_strength(RelationGraph(RelationMode.BC, (1, 2), {(1, 2): 1.0}))
    with pytest.raises(ValueError):
        association_strength(g)


def test_threshold_cases():
    g = RelationGraph(RelationMode.BC, (1, 2, 3, 4), {(1, 2): 0.1, (2, 3): 0.3, (3, 4): 0.5})
    assert threshold_edges(g, 0) == g
    assert len(threshold_edges(g, 0.3).edges) == 2
    empty = threshold_edges(g, 1.0)
    assert empty.edges == {} and empty.nodes == g.nodes
    with pytest.raises(ValueError):
        threshold_edges(g, -1)


def test_link_strength_star_and_isolated():
    g = RelationGraph(RelationMode.BC, (1, 2, 3, 4, 5), {(1, 2): 1.0, (1, 3): 1.0, (1, 4): 1.0})
    s = link_strength(g)
    assert s[1] == 3 and s[5] == 0


def test_link_strength_matches_summation_oracle():
    rng = np.random.default_rng(8)
    edges = {}
    for u, v in itertools.combinations(range(1, 9), 2):
        if rng.random() < 0.5:
            edges[(u, v)] = float(rng.integers(1, 6))
    g = RelationGraph(RelationMode.BC, tuple(range(1, 9)), edges)
    s = link_strength(g)
    for node in g.nodes:
        expected = 0.0
        for (u, v), w in edges.items():
            if node in (u, v):
                expected += w
        assert s[node] == expected


def test_invalid_graphs_rejected():
    with pytest.raises(ValueError):
        RelationGraph(RelationMode.BC, (1, 2), {(2, 1): 1.0})
    with pytest.raises(ValueError):
        RelationGraph(RelationMode.BC, (1, 2), {(1, 3): 1.0})
    with pytest.raises(ValueError):
        RelationGraph(RelationMode.BC, (1, 2), {(1, 2): 0.0})
    with pytest.raises(ValueError):
        RelationGraph(RelationMode.BC, (1, 1))


def test_edge_list_round_trip(tmp_path):
    g = association_strength(RelationGraph(RelationMode.BC, (1, 2, 3), {(1, 2): 2.0, (2, 3): 3.0}))
    write_edge_list(g, tmp_path / "e.csv")
    back = read_edge_list(tmp_path / "e.csv", nodes=g.nodes, normalized=True)
    assert back == g


def test_build_graph_defaults_keep_every_positive_edge(blocked):
    instance, _ = blocked
    raw = coupling_graph(instance.papers)
    built = build_graph(instance.papers)
    assert built.normalized
    assert set(built.edges) == set(raw.edges)
    cit = build_graph(instance.papers, "CIT", normalize=False)
    assert cit.mode is RelationMode.CIT


@st.composite
def reference_corpora(draw):
    n = draw(st.integers(2, 7))
    pool = [f"work {i}" for i in range(10)]
    return [_paper(i + 1, draw(st.lists(st.sampled_from(pool), unique=True, max_size=6))) for i in range(n)]


@settings(max_examples=50, deadline=None)
@given(reference_corpora())
def test_graph_invariants(papers):
    raw = coupling_graph(papers)
    assert all(float(w).is_integer() for w in raw.edges.values())
    s = link_strength(raw)
    assert sum(s.values()) == pytest.approx(2 * raw.total_weight)
    norm = association_strength(raw)
    assert set(norm.edges) == set(raw.edges)
    adj = raw.to_csr()
    assert (adj != adj.T).nnz == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6)), max_size=12))
def test_citation_weights_one_or_two(pairs):
    cites = {i: set() for i in range(1, 7)}
    for a, b in pairs:
        if a != b:
            cites[a].add(b)
    g = citation_graph([_paper(i, cites=cites[i]) for i in range(1, 7)])
    assert set(g.edges.values()) <= {1.0, 2.0}
