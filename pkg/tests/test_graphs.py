from __future__ import annotations

import itertools
import json

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyquant.graphs import (
    BaseGraph,
    biclique,
    biclique_minus_matching,
    complete_graph,
    composite_graph,
    edge_connectivity,
    from_edges,
    lex_shortest_path,
    path_vertices,
    toroidal_grid,
)


def proper_bipartition(g: BaseGraph) -> bool:
    return g.side is not None and all(g.side[u] != g.side[w] for u, w in g.edges) and g.side.count(0) * 2 == g.V


def to_nx(g: BaseGraph) -> nx.Graph:
    G = nx.Graph()
    G.add_nodes_from(g.vertices)
    G.add_edges_from(g.edges)
    return G


def test_torus_examples():
    c8 = toroidal_grid(2, [8])
    assert (c8.V, c8.E, c8.d) == (8, 8, 2) and edge_connectivity(c8) == 2
    t = toroidal_grid(3, [8])
    assert (t.V, t.E) == (16, 24) and edge_connectivity(t) == 3
    t = toroidal_grid(4, [4, 4])
    assert (t.V, t.E) == (16, 32) and edge_connectivity(t) == 4
    for g in (c8, t, toroidal_grid(3, [8])):
        assert proper_bipartition(g)


def test_torus_errors():
    with pytest.raises(ValueError):
        toroidal_grid(2, [7])
    with pytest.raises(ValueError):
        toroidal_grid(2, [2])
    with pytest.raises(ValueError):
        toroidal_grid(4, [4])
    with pytest.raises(ValueError):
        toroidal_grid(1, [])


def test_composite_g34():
    g = composite_graph(3, 4)
    assert (g.V, g.E, g.d) == (40, 60, 3)
    assert proper_bipartition(g)
    cross = [e for e, (u, w) in enumerate(g.edges) if g.copy[u] != g.copy[w]]
    assert len(cross) == 20
    for v in g.vertices:
        at = [e for e in g.inc[v] if e in set(cross)]
        assert at == [g.inc[v][0]]
        u = g.other(g.inc[v][0], v)
        assert (g.copy[u], g.partner[u]) == (g.partner[v], g.copy[v])
        assert g.labels[v][0] == ("v" if g.side[v] == 0 else "w")
    assert g.n_copies == 5 and all(len(g.copy_vertices(i)) == 8 for i in range(1, 6))
    assert edge_connectivity(g) == 3


@pytest.mark.parametrize("d, n", [(3, 7), (4, 8), (5, 8)])
def test_composite_regular_bipartite(d, n):
    g = composite_graph(d, n)
    assert g.V == 2 * n * (n + 1)
    assert all(len(g.inc[v]) == d for v in g.vertices)
    assert proper_bipartition(g)


def test_composite_errors():
    with pytest.raises(ValueError):
        composite_graph(2, 4)
    with pytest.raises(ValueError):
        composite_graph(3, 2)
    with pytest.raises(ValueError):
        composite_graph(4, 5)  # no 3-regular even torus with 5 vertices per side
    with pytest.raises(ValueError):
        composite_graph(4, 4, toroidal_grid(2, [8]))


def test_biclique_minus_matching():
    g = biclique_minus_matching(3)
    assert (g.V, g.E) == (8, 12) and proper_bipartition(g)
    with pytest.raises(ValueError):
        biclique_minus_matching(2)


def test_g3_survives_three_edge_removals():
    g = biclique_minus_matching(3)
    G = to_nx(g)
    checked = 0
    for trio in itertools.combinations(range(g.E), 3):
        ends = [set(g.edges[e]) for e in trio]
        if set.intersection(*ends):
            continue  # all three at one vertex isolate it
        H = G.copy()
        H.remove_edges_from(g.edges[e] for e in trio)
        assert nx.is_connected(H), trio
        checked += 1
    assert checked == 220 - 8


def test_edge_connectivity_small():
    assert edge_connectivity(from_edges(1, 2, [(0, 1)])) == 1
    assert edge_connectivity(complete_graph(4)) == 3
    assert edge_connectivity(biclique(3)) == 3


def test_base_graph_validation():
    with pytest.raises(ValueError):
        from_edges(2, 4, [(0, 1), (1, 2), (2, 3)])  # not regular
    with pytest.raises(ValueError):
        from_edges(2, 6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])  # disconnected
    with pytest.raises(ValueError):
        from_edges(2, 3, [(0, 0), (1, 2)])


@pytest.mark.parametrize("g", [composite_graph(3, 4), biclique_minus_matching(3), toroidal_grid(3, [8])], ids=lambda g: g.name)
def test_json_round_trip(g):
    back = BaseGraph.from_json(json.loads(json.dumps(g.to_json())))
    assert back == g


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 39), st.integers(0, 39), st.sets(st.integers(0, 59), max_size=6))
def test_lex_shortest_path_is_shortest(src, dst, blocked):
    g = composite_graph(3, 4)
    path = lex_shortest_path(g, src, dst, edge_ok=lambda e: e not in blocked)
    H = to_nx(g)
    H.remove_edges_from(g.edges[e] for e in blocked)
    if not nx.has_path(H, src, dst):
        assert path is None
        return
    assert len(path) == nx.shortest_path_length(H, src, dst)
    verts = path_vertices(g, src, path)
    assert verts[0] == src and verts[-1] == dst and len(set(verts)) == len(verts)
    assert not set(path) & blocked


def test_lex_shortest_path_prefers_smaller_vertices():
    g = toroidal_grid(2, [8])
    assert path_vertices(g, 0, lex_shortest_path(g, 0, 4)) == [0, 1, 2, 3, 4]
    assert lex_shortest_path(g, 3, 3) == []
    assert path_vertices(g, 0, lex_shortest_path(g, 0, 4, first_positions=[2])) == [0, 7, 6, 5, 4]
