import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netspde.errors import DisconnectedGraph, EmptyEdgeList, InvalidVertexIndex, SelfLoop
from netspde.graph import build_graph, incidence, incident_edges, path_graph, star_graph


def test_path_and_single_edge():
    assert path_graph(3).n_edges == 2
    g = build_graph(2, [(1, 2)])
    assert g.n_edges == 1
    np.testing.assert_array_equal(incidence(g).phi, [[1.0], [-1.0]])


@pytest.mark.parametrize(
    "n, edges, err",
    [
        (4, [(1, 2), (3, 4)], DisconnectedGraph),
        (3, [(1, 2)], DisconnectedGraph),  # isolated vertex
        (3, [], EmptyEdgeList),
        (3, [(1, 4), (2, 3)], InvalidVertexIndex),
        (3, [(0, 1), (2, 3)], InvalidVertexIndex),
        (1, [(1, 1)], InvalidVertexIndex),
        (2, [(1, 1), (1, 2)], SelfLoop),
    ],
)
def test_rejects_invalid(n, edges, err):
    with pytest.raises(err):
        build_graph(n, edges)


def test_incidence_p3_column():
    phi = incidence(path_graph(3)).phi
    np.testing.assert_array_equal(phi[:, 0], [1, -1, 0])


def test_star_center_row():
    inc = incidence(star_graph(3))
    np.testing.assert_array_equal(inc.phi_plus[0], [1, 1, 1])
    assert incident_edges(star_graph(3), 1) == {1, 2, 3}


def test_incident_edges_p3():
    g = path_graph(3)
    assert incident_edges(g, 2) == {1, 2}
    assert incident_edges(g, 1) == {1}
    with pytest.raises(InvalidVertexIndex):
        incident_edges(g, 4)


def test_parallel_edges_allowed():
    g = build_graph(2, [(1, 2), (2, 1)])
    np.testing.assert_array_equal(incidence(g).phi, [[1, -1], [-1, 1]])


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 8))
    edges = []
    for v in range(2, n + 1):  # random spanning tree with random orientation
        u = draw(st.integers(1, v - 1))
        edges.append((u, v) if draw(st.booleans()) else (v, u))
    for _ in range(draw(st.integers(0, 4))):
        a, b = draw(st.integers(1, n)), draw(st.integers(1, n))
        if a != b:
            edges.append((a, b))
    return build_graph(n, edges)


@given(connected_graphs())
@settings(max_examples=60, deadline=None)
def test_incidence_invariants(g):
    inc = incidence(g)
    assert np.all(inc.phi_plus.sum(axis=0) == 1)
    assert np.all(inc.phi_minus.sum(axis=0) == 1)
    assert np.all(inc.phi.sum(axis=0) == 0)
    assert set(np.unique(inc.phi)) <= {-1.0, 0.0, 1.0}
    for v in range(1, g.n_vertices + 1):
        got = incident_edges(g, v)
        assert got == {i + 1 for i in np.flatnonzero(inc.phi[v - 1] != 0)}
        assert got
