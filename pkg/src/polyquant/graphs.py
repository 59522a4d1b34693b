"""Ordered regular base graphs: toroidal grids, composite graphs G_{d,n}, bicliques minus a matching."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence


@dataclass(frozen=True)
class BaseGraph:
    """A d-regular connected graph with a fixed vertex order and per-vertex edge order.

    Vertices are 0..V-1 (their order is the vertex order).  Edges are pairs
    (u, w) with u < w, numbered in lexicographic order.  ``inc[v]`` is the
    ordered tuple of edge ids at v.  For composite graphs ``copy[v]`` is the
    copy index i of v and ``partner[v]`` the index j with v = v_ij or w_ij.
    """

    d: int
    edges: tuple[tuple[int, int], ...]
    inc: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...]
    side: tuple[int, ...] | None = None
    copy: tuple[int, ...] | None = None
    partner: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        V = len(self.labels)
        if len(self.inc) != V:
            raise ValueError("incidence table does not match the vertex count")
        if list(self.edges) != sorted(self.edges) or any(u >= w for u, w in self.edges):
            raise ValueError("edges must be sorted pairs (u, w) with u < w")
        seen = [[] for _ in range(V)]
        for e, (u, w) in enumerate(self.edges):
            seen[u].append(e)
            seen[w].append(e)
        for v in range(V):
            if sorted(self.inc[v]) != sorted(seen[v]):
                raise ValueError(f"edge order at vertex {v} does not list its incident edges")
            if len(self.inc[v]) != self.d:
                raise ValueError(f"vertex {v} has degree {len(self.inc[v])}, expected {self.d}")
        if self.copy is not None:
            for v in range(V):
                e = self.inc[v][0]
                if self.copy[self.other(e, v)] == self.copy[v]:
                    raise ValueError(f"first edge at vertex {v} is not its cross-copy edge")
        if V and len(self.component(0)) != V:
            raise ValueError("graph is not connected")

    @property
    def V(self) -> int:
        return len(self.labels)

    @property
    def E(self) -> int:
        return len(self.edges)

    @property
    def vertices(self) -> range:
        return range(self.V)

    def other(self, e: int, v: int) -> int:
        u, w = self.edges[e]
        return w if v == u else u

    def neighbors(self, v: int) -> list[int]:
        return [self.other(e, v) for e in self.inc[v]]

    def position(self, v: int, e: int) -> int:
        """1-based position of e in the edge order at v."""
        return self.inc[v].index(e) + 1

    def component(self, start: int) -> set[int]:
        seen = {start}
        todo = [start]
        while todo:
            v = todo.pop()
            for w in self.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen

    def edge_label(self, e: int) -> str:
        u, w = self.edges[e]
        return f"{self.labels[u]}-{self.labels[w]}"

    def copy_vertices(self, i: int) -> list[int]:
        if self.copy is None:
            raise ValueError("graph has no copy metadata")
        return [v for v in self.vertices if self.copy[v] == i]

    @property
    def n_copies(self) -> int:
        return max(self.copy) if self.copy else 0

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "degree": self.d,
            "vertices": list(self.labels),
            "edges": [[self.labels[u], self.labels[w]] for u, w in self.edges],
            "edge_order": {self.labels[v]: [self.edge_label(e) for e in self.inc[v]] for v in self.vertices},
        }
        if self.side is not None:
            out["bipartition"] = list(self.side)
        if self.copy is not None:
            out["copies"] = {self.labels[v]: [self.copy[v], self.partner[v]] for v in self.vertices}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "BaseGraph":
        labels = tuple(data["vertices"])
        idx = {l: i for i, l in enumerate(labels)}
        pairs = sorted(tuple(sorted((idx[a], idx[b]))) for a, b in data["edges"])
        eid = {p: e for e, p in enumerate(pairs)}

        def edge_of(s: str) -> int:
            a, b = s.split("-")
            return eid[tuple(sorted((idx[a], idx[b])))]

        inc = tuple(tuple(edge_of(s) for s in data["edge_order"][l]) for l in labels)
        side = tuple(data["bipartition"]) if "bipartition" in data else None
        copy = partner = None
        if "copies" in data:
            copy = tuple(data["copies"][l][0] for l in labels)
            partner = tuple(data["copies"][l][1] for l in labels)
        return cls(int(data["degree"]), tuple(pairs), inc, labels, side, copy, partner, data.get("name", ""))


def from_edges(
    d: int,
    n_vertices: int,
    edge_list: Iterable[tuple[int, int]],
    labels: Sequence[str] | None = None,
    side: Sequence[int] | None = None,
    name: str = "",
    first_edge: Callable[[int, list[int]], int] | None = None,
    copy: Sequence[int] | None = None,
    partner: Sequence[int] | None = None,
) -> BaseGraph:
    """Assemble a BaseGraph whose edge order at v follows neighbour order.

    ``first_edge(v, edge_ids)`` may pick one edge to move to the front.
    """
    pairs = sorted({tuple(sorted(p)) for p in edge_list})
    if any(u == w for u, w in pairs):
        raise ValueError("self-loops are not allowed")
    at = [[] for _ in range(n_vertices)]
    for e, (u, w) in enumerate(pairs):
        at[u].append(e)
        at[w].append(e)
    inc = []
    for v in range(n_vertices):
        es = sorted(at[v], key=lambda e: (pairs[e][0] + pairs[e][1] - v, e))
        if first_edge is not None:
            f = first_edge(v, es)
            es.remove(f)
            es.insert(0, f)
        inc.append(tuple(es))
    labels = tuple(labels) if labels is not None else tuple(str(v) for v in range(n_vertices))
    return BaseGraph(
        d, tuple(pairs), tuple(inc), labels,
        tuple(side) if side is not None else None,
        tuple(copy) if copy is not None else None,
        tuple(partner) if partner is not None else None,
        name,
    )


def toroidal_grid(d: int, sides: Sequence[int]) -> BaseGraph:
    if d < 2:
        raise ValueError("degree must be at least 2")
    sides = tuple(int(s) for s in sides)
    dims = d // 2
    if len(sides) != dims:
        raise ValueError(f"degree {d} needs {dims} side lengths, got {len(sides)}")
    for s in sides:
        if s % 2:
            raise ValueError(f"side {s} is odd; the grid would not be bipartite")
        if s < 4:
            raise ValueError(f"side {s} is below 4")
    layers = 2 if d % 2 else 1
    coords = list(itertools.product(range(layers), *(range(s) for s in sides)))
    index = {c: i for i, c in enumerate(coords)}
    edges = []
    for c in coords:
        for k, s in enumerate(sides):
            nb = list(c)
            nb[k + 1] = (c[k + 1] + 1) % s
            edges.append((index[c], index[tuple(nb)]))
        if layers == 2 and c[0] == 0:
            edges.append((index[c], index[(1,) + c[1:]]))
    side = [sum(c) % 2 for c in coords]
    labels = ["_".join(map(str, c if layers == 2 else c[1:])) for c in coords]
    return from_edges(d, len(coords), edges, labels, side, name=f"torus{d}:{'x'.join(map(str, sides))}")


def _grid_sides(degree: int, total: int) -> tuple[int, ...] | None:
    """Even side lengths >= 4 for a toroidal grid of the given degree and vertex count."""
    dims = degree // 2
    need = total // 2 if degree % 2 else total
    if degree % 2 and total % 2:
        return None
    best = None
    for combo in itertools.combinations_with_replacement(range(4, need + 1, 2), dims):
        if math.prod(combo) == need:
            key = (max(combo) - min(combo), combo)
            if best is None or key < best[0]:
                best = (key, combo)
    return best[1] if best else None


def biclique_minus_matching(k: int) -> BaseGraph:
    if k < 3:
        raise ValueError("k must be at least 3")
    m = k + 1
    edges = [(i, m + j) for i in range(m) for j in range(m) if i != j]
    labels = [f"a{i}" for i in range(m)] + [f"b{j}" for j in range(m)]
    side = [0] * m + [1] * m
    return from_edges(k, 2 * m, edges, labels, side, name=f"biclique-minus-matching:{k}")


def complete_graph(m: int) -> BaseGraph:
    if m < 3:
        raise ValueError("need at least 3 vertices")
    edges = list(itertools.combinations(range(m), 2))
    return from_edges(m - 1, m, edges, name=f"complete:{m}")


def biclique(k: int) -> BaseGraph:
    if k < 1:
        raise ValueError("k must be positive")
    edges = [(i, k + j) for i in range(k) for j in range(k)]
    labels = [f"a{i}" for i in range(k)] + [f"b{j}" for j in range(k)]
    return from_edges(k, 2 * k, edges, labels, [0] * k + [1] * k, name=f"biclique:{k}")


def composite_graph(d: int, n: int, h: BaseGraph | None = None) -> BaseGraph:
    """G_{d,n}: n+1 copies of a (d-1)-regular bipartite H joined by cross edges v_ij -- w_ji.

    H defaults to a toroidal grid with n vertices per side.
    """
    if d < 3:
        raise ValueError("composite graphs need degree at least 3")
    if n < d:
        raise ValueError(f"need n >= d, got n={n}, d={d}")
    if h is None:
        sides = _grid_sides(d - 1, 2 * n)
        if sides is None:
            raise ValueError(f"no toroidal grid of degree {d - 1} with {n} vertices per side")
        h = toroidal_grid(d - 1, sides)
    if h.d != d - 1 or h.side is None:
        raise ValueError("H must be a bipartite (d-1)-regular graph")
    left = [v for v in h.vertices if h.side[v] == 0]
    right = [v for v in h.vertices if h.side[v] == 1]
    if len(left) != n or len(right) != n:
        raise ValueError(f"H must have {n} vertices on each side")

    vid: dict[tuple[str, int, int], int] = {}
    labels, side, copy, partner = [], [], [], []
    hmap: dict[tuple[int, int], int] = {}
    for i in range(1, n + 2):
        js = [j for j in range(1, n + 2) if j != i]
        for kind, part in (("v", left), ("w", right)):
            for j, x in zip(js, part):
                vid[(kind, i, j)] = len(labels)
                hmap[(i, x)] = len(labels)
                labels.append(f"{kind}{i}_{j}")
                side.append(0 if kind == "v" else 1)
                copy.append(i)
                partner.append(j)
    edges = []
    for i in range(1, n + 2):
        for a, b in h.edges:
            edges.append((hmap[(i, a)], hmap[(i, b)]))
    for i in range(1, n + 2):
        for j in range(1, n + 2):
            if i != j:
                edges.append((vid[("v", i, j)], vid[("w", j, i)]))

    def cross(v: int, es: list[int]) -> int:
        return next(e for e in es if copy[pairs[e][0]] != copy[pairs[e][1]])

    pairs = sorted({tuple(sorted(p)) for p in edges})
    return from_edges(d, len(labels), edges, labels, side, f"composite:{d}:{n}", cross, copy, partner)


def edge_connectivity(graph: BaseGraph) -> int:
    import networkx as nx

    G = nx.Graph()
    G.add_nodes_from(graph.vertices)
    G.add_edges_from(graph.edges)
    if not nx.is_connected(G):
        raise ValueError("graph is disconnected")
    return nx.edge_connectivity(G)


def bfs_distances(
    graph: BaseGraph,
    source: int,
    vertex_ok: Callable[[int], bool],
    edge_ok: Callable[[int], bool],
    blocked: int | None = None,
) -> dict[int, int]:
    dist = {source: 0}
    q = deque([source])
    while q:
        v = q.popleft()
        for e in graph.inc[v]:
            if not edge_ok(e):
                continue
            w = graph.other(e, v)
            if w in dist or w == blocked or not vertex_ok(w):
                continue
            dist[w] = dist[v] + 1
            q.append(w)
    return dist


def lex_shortest_path(
    graph: BaseGraph,
    src: int,
    dst: int,
    vertex_ok: Callable[[int], bool] = lambda v: True,
    edge_ok: Callable[[int], bool] = lambda e: True,
    first_positions: Iterable[int] | None = None,
) -> list[int] | None:
    """Edge ids of the shortest, then lexicographically least (by vertex sequence), path.

    ``src`` and ``dst`` are exempt from ``vertex_ok``; ``first_positions``
    restricts which 1-based positions of the edge order at src may start the path.
    """
    if src == dst:
        return []
    dist = bfs_distances(graph, dst, lambda v: v == dst or vertex_ok(v), edge_ok, blocked=src)
    allowed = set(first_positions) if first_positions is not None else None
    best = None
    for pos, e in enumerate(graph.inc[src], start=1):
        if allowed is not None and pos not in allowed:
            continue
        if not edge_ok(e):
            continue
        w = graph.other(e, src)
        if w in dist:
            key = (dist[w], w, e)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    path = [best[2]]
    cur = best[1]
    while cur != dst:
        step = min(
            (graph.other(e, cur), e)
            for e in graph.inc[cur]
            if edge_ok(e) and dist.get(graph.other(e, cur), -2) == dist[cur] - 1
        )
        path.append(step[1])
        cur = step[0]
    return path


def path_vertices(graph: BaseGraph, src: int, path: Sequence[int]) -> list[int]:
    out = [src]
    for e in path:
        out.append(graph.other(e, out[-1]))
    return out
