"""Finite connected metric graphs with unit-length edges.

Vertices and edges are numbered from 1 in the public API (config files,
``incident_edges``); arrays stored on :class:`MetricGraph` are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, EmptyEdgeList, InvalidVertexIndex, SelfLoop


@dataclass(frozen=True)
class IncidenceMatrices:
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class MetricGraph:
    """Graph with ``n_vertices`` nodes and oriented edges ``(tail, head)``.

    Each edge is identified with [0, 1]; the tail sits at x=0, the head at x=1.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    tails: np.ndarray = field(repr=False, compare=False)
    heads: np.ndarray = field(repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_graph(n_vertices: int, edges) -> MetricGraph:
    if int(n_vertices) != n_vertices or n_vertices < 2:
        raise InvalidVertexIndex(f"n_vertices must be an integer >= 2, got {n_vertices}")
    n_vertices = int(n_vertices)
    edges = [tuple(int(v) for v in e) for e in edges]
    if not edges:
        raise EmptyEdgeList("a metric graph needs at least one edge")
    for i, e in enumerate(edges, start=1):
        if len(e) != 2:
            raise InvalidVertexIndex(f"edge {i} must be a (tail, head) pair, got {e}")
        for v in e:
            if not 1 <= v <= n_vertices:
                raise InvalidVertexIndex(f"edge {i} references vertex {v} outside [1, {n_vertices}]")
        if e[0] == e[1]:
            raise SelfLoop(f"edge {i} is a self-loop at vertex {e[0]}")

    tails = np.array([e[0] - 1 for e in edges], dtype=int)
    heads = np.array([e[1] - 1 for e in edges], dtype=int)

    # union-find over undirected edges
    parent = list(range(n_vertices))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(tails, heads):
        parent[find(a)] = find(b)
    roots = {find(v) for v in range(n_vertices)}
    if len(roots) > 1:
        # also catches isolated vertices
        raise DisconnectedGraph(f"graph has {len(roots)} connected components")

    tails.flags.writeable = False
    heads.flags.writeable = False
    return MetricGraph(n_vertices, tuple(edges), tails, heads)


def incidence(g: MetricGraph) -> IncidenceMatrices:
    n, m = g.n_vertices, g.n_edges
    cols = np.arange(m)
    plus = np.zeros((n, m))
    minus = np.zeros((n, m))
    plus[g.tails, cols] = 1.0   # v = e_i(0)
    minus[g.heads, cols] = 1.0  # v = e_i(1)
    return IncidenceMatrices(plus, minus, plus - minus)


def incident_edges(g: MetricGraph, vertex: int) -> set[int]:
    """Return the 1-based indices of the edges touching ``vertex`` (1-based)."""
    if not 1 <= vertex <= g.n_vertices:
        raise InvalidVertexIndex(f"vertex {vertex} outside [1, {g.n_vertices}]")
    v = vertex - 1
    return {i + 1 for i in range(g.n_edges) if g.tails[i] == v or g.heads[i] == v}


def path_graph(n: int) -> MetricGraph:
    return build_graph(n, [(k, k + 1) for k in range(1, n)])


def star_graph(leaves: int) -> MetricGraph:
    """K_{1,leaves} with center 1 and every edge oriented outward."""
    return build_graph(leaves + 1, [(1, k) for k in range(2, leaves + 2)])
