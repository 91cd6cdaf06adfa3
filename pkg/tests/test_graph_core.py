import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dplp.errors import EdgeListParseError, NodeIndexError, PerturbationError, ValidationError
from dplp.graph_core import (
    EdgePerturbation,
    Graph,
    PerturbationKind,
    apply_perturbation,
    enumerate_perturbations,
    graph_statistics,
    has_triangle,
    load_edge_list,
    neighbors,
    non_neighbors,
    write_edge_list,
)
from tests.conftest import edge_list


def test_load_compacts_labels_and_symmetrizes():
    g = edge_list("# comment\n10 20\n\n20 30\n")
    assert g.node_count == 3
    assert g.edge_count == 2
    assert list(g.labels) == [10, 20, 30]
    assert list(neighbors(g, 1)) == [0, 2]
    assert g.has_edge(2, 1)


def test_load_drops_self_loops_and_duplicates(caplog):
    g = edge_list("0 1\n1 0\n2 2\n1 2\n")
    assert g.edge_count == 2
    assert list(g.neighbors(2)) == [1]
    assert "dropped 1 self-loops and 1 duplicate" in caplog.text


@pytest.mark.parametrize("text", ["0\n", "a b\n", "0 -1\n", "1 2\n3 x\n"])
def test_load_rejects_malformed_lines(text):
    with pytest.raises(EdgeListParseError) as info:
        edge_list(text)
    assert info.value.line_number == text.count("\n")


def test_empty_file_is_empty_graph():
    g = edge_list("# nothing\n")
    assert g.node_count == 0
    assert g.edge_count == 0


def test_arrays_are_read_only(path4):
    with pytest.raises(ValueError):
        path4.neighbors(1)[0] = 3
    with pytest.raises(ValueError):
        path4.degrees[0] = 9


def test_node_out_of_range(path4):
    with pytest.raises(NodeIndexError):
        path4.neighbors(4)
    with pytest.raises(IndexError):
        path4.degree(-1)


def test_non_neighbors_excludes_self_and_neighbors(path4):
    assert list(non_neighbors(path4, 1)) == [3]
    assert list(non_neighbors(path4, 0)) == [2, 3]


def test_apply_perturbation_add_and_remove(path4):
    added = apply_perturbation(path4, EdgePerturbation(u=0, v=3, kind=PerturbationKind.ADD))
    assert added.has_edge(3, 0)
    assert added.edge_count == 4
    assert path4.edge_count == 3
    removed = apply_perturbation(path4, EdgePerturbation(u=2, v=1, kind="remove"))
    assert not removed.has_edge(1, 2)
    assert removed.degree(1) == 1


def test_apply_perturbation_rejects_inconsistent_kind(path4):
    with pytest.raises(PerturbationError):
        apply_perturbation(path4, EdgePerturbation(u=0, v=1, kind=PerturbationKind.ADD))
    with pytest.raises(PerturbationError):
        apply_perturbation(path4, EdgePerturbation(u=0, v=2, kind=PerturbationKind.REMOVE))


def test_perturbation_endpoints_must_differ():
    with pytest.raises(ValueError):
        EdgePerturbation(u=1, v=1, kind=PerturbationKind.ADD)


def test_enumerate_perturbations_covers_every_pair(path4):
    perturbations = list(enumerate_perturbations(path4))
    assert len(perturbations) == 6
    removes = {(p.u, p.v) for p in perturbations if p.kind is PerturbationKind.REMOVE}
    assert removes == {(0, 1), (1, 2), (2, 3)}


def test_has_triangle():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    assert has_triangle(g, 0)
    assert not has_triangle(g, 3)


def test_write_edge_list_uses_original_labels():
    g = edge_list("5 7\n7 9\n")
    sink = io.StringIO()
    write_edge_list(g, sink)
    assert sink.getvalue() == "5 7\n7 9\n"


def test_graph_statistics(path4):
    stats = graph_statistics(path4)
    assert stats.nodes == 4
    assert stats.edges == 3
    assert stats.avg_degree == pytest.approx(1.5)
    assert stats.clustering == 0.0
    assert stats.diameter == 3.0


def test_graph_statistics_disconnected_has_infinite_diameter():
    stats = graph_statistics(Graph.from_edges(4, [(0, 1), (2, 3)]))
    assert stats.diameter == float("inf")


def test_from_edges_rejects_out_of_range_endpoint():
    with pytest.raises(ValidationError):
        Graph.from_edges(2, [(0, 2)])


@st.composite
def small_graphs(draw):
    n = draw(st.integers(min_value=2, max_value=9))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))
    return Graph.from_edges(n, pairs)


@settings(max_examples=60, deadline=None)
@given(small_graphs(), st.data())
def test_perturbation_changes_exactly_one_edge(g, data):
    u = data.draw(st.integers(0, g.node_count - 1))
    v = data.draw(st.integers(0, g.node_count - 1).filter(lambda x: x != u))
    kind = PerturbationKind.REMOVE if g.has_edge(u, v) else PerturbationKind.ADD
    h = apply_perturbation(g, EdgePerturbation(u=u, v=v, kind=kind))
    before = set(g.edges())
    after = set(h.edges())
    assert len(before ^ after) == 1
    for w in range(h.node_count):
        row = h.neighbors(w)
        assert np.all(np.diff(row) > 0)
        assert all(h.has_edge(int(x), w) for x in row)


@settings(max_examples=40, deadline=None)
@given(small_graphs())
def test_edge_list_round_trip_preserves_structure(g):
    sink = io.StringIO()
    write_edge_list(g, sink)
    reloaded = load_edge_list(io.StringIO(sink.getvalue()))
    assert reloaded == g
    assert np.array_equal(reloaded.labels, g.labels)


def test_round_trip_keeps_isolated_node():
    g0 = Graph.from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
    g = apply_perturbation(g0, EdgePerturbation(u=2, v=3, kind=PerturbationKind.REMOVE))
    sink = io.StringIO()
    write_edge_list(g, sink)
    assert sink.getvalue().splitlines()[0] == "#% isolated 3"
    reloaded = load_edge_list(io.StringIO(sink.getvalue()))
    assert reloaded.node_count == 4
    assert reloaded.edge_count == 3
    assert reloaded.degree(3) == 0
    assert reloaded == g


def test_isolated_directive_keeps_sparse_labels():
    g = edge_list("#% isolated 40 7\n# 99 100 is a comment\n10 20\n")
    assert list(g.labels) == [7, 10, 20, 40]
    assert g.edge_count == 1
    assert g.has_edge(1, 2)


def test_isolated_directive_rejects_bad_label():
    with pytest.raises(EdgeListParseError):
        edge_list("#% isolated 3 x\n0 1\n")
