"""CFI-style instances over Z_3 (near-unanimity variants) and Z_4 (Maltsev variant), and bijections on them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graphs import BaseGraph, lex_shortest_path, path_vertices
from .linalg import build_separator_set
from .structures import RelSymbol, Structure
from .templates import u_vector


@dataclass(frozen=True)
class Variant:
    kind: str  # "nu" | "nu-star" | "maltsev"
    ell: int = 3
    r: int = 0
    k: int = 0

    def __post_init__(self) -> None:
        if self.kind == "nu" and self.ell < 3:
            raise ValueError("NU variant needs ell >= 3")
        if self.kind == "nu-star" and not self.r >= self.ell >= 3:
            raise ValueError("starred variant needs r >= ell >= 3")
        if self.kind == "maltsev" and self.k < 3:
            raise ValueError("Maltsev variant needs k >= 3")
        if self.kind not in ("nu", "nu-star", "maltsev"):
            raise ValueError(f"unknown variant {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Variant":
        kind, _, rest = text.partition(":")
        ps = [int(x) for x in rest.split(",")] if rest else []
        if kind == "nu":
            return cls("nu", ell=ps[0] if ps else 3)
        if kind == "nu-star":
            r, ell = ps
            return cls("nu-star", ell=ell, r=r)
        if kind == "maltsev":
            return cls("maltsev", k=ps[0] if ps else 3)
        raise ValueError(f"unknown variant {text!r}")

    def __str__(self) -> str:
        if self.kind == "nu":
            return f"nu:{self.ell}"
        if self.kind == "nu-star":
            return f"nu-star:{self.r},{self.ell}"
        return f"maltsev:{self.k}"

    @property
    def degree(self) -> int:
        return {"nu": self.ell, "nu-star": 2 * self.r + 1, "maltsev": self.k}[self.kind]

    @property
    def modulus(self) -> int:
        return 4 if self.kind == "maltsev" else 3

    @cached_property
    def weights(self) -> np.ndarray:
        """Rows of weights defining the vertex-atom coordinates of a gadget tuple."""
        if self.kind == "nu":
            return np.array([u_vector(self.ell)], dtype=np.int64)
        if self.kind == "nu-star":
            return np.array(build_separator_set(self.ell, 2 * self.r + 1).vectors, dtype=np.int64)
        return np.zeros((0, self.k), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class CFIStructure:
    """A CFI instance together with the role of every atom.

    Atom ids: edge atoms (e, a) are e*m + a; vertex atoms (v, j, a) follow as
    E*m + (v*J + j-1)*3 + a, where J is the number of vertex-atom classes per
    vertex (1 for NU, |U| for the starred variant, 0 for Maltsev).
    """

    structure: Structure
    variant: Variant
    graph: BaseGraph
    U: frozenset

    @property
    def m(self) -> int:
        return self.variant.modulus

    @property
    def J(self) -> int:
        return len(self.variant.weights)

    @property
    def n_atoms(self) -> int:
        return len(self.structure.universe)

    def charge(self, v: int) -> int:
        return 1 if v in self.U else 0

    def edge_atom(self, e: int, a: int) -> int:
        return e * self.m + a % self.m

    def vertex_atom(self, v: int, a: int, j: int = 1) -> int:
        return self.graph.E * self.m + (v * self.J + j - 1) * 3 + a % 3

    def role(self, x: int) -> tuple:
        E, m = self.graph.E, self.m
        if x < E * m:
            return ("e", x // m, x % m)
        y = x - E * m
        cls, a = divmod(y, 3)
        v, j = divmod(cls, self.J)
        return ("v", v, j + 1, a)

    def atom_name(self, x: int) -> str:
        g = self.graph
        r = self.role(x)
        if r[0] == "e":
            return f"e:{g.edge_label(r[1])}:{r[2]}"
        if self.variant.kind == "nu":
            return f"v:{g.labels[r[1]]}:{r[3]}"
        return f"v:{g.labels[r[1]]}:{r[2]}:{r[3]}"

    # -- numpy views used by the games -----------------------------------

    @cached_property
    def n_locations(self) -> int:
        return self.graph.E + self.graph.V * self.J

    @cached_property
    def atom_loc(self) -> np.ndarray:
        """Location of each atom: its edge id, or E + vertex class index."""
        E, m = self.graph.E, self.m
        x = np.arange(self.n_atoms)
        return np.where(x < E * m, x // m, E + (x - E * m) // 3)

    @cached_property
    def atom_val(self) -> np.ndarray:
        E, m = self.graph.E, self.m
        x = np.arange(self.n_atoms)
        return np.where(x < E * m, x % m, (x - E * m) % 3)

    def loc_vertices(self, loc: int) -> tuple[int, ...]:
        E = self.graph.E
        if loc < E:
            return self.graph.edges[loc]
        return ((loc - E) // self.J,)

    def loc_name(self, loc: int) -> str:
        E = self.graph.E
        if loc < E:
            return f"e:{self.graph.edge_label(loc)}"
        v, j = divmod(loc - E, self.J)
        if self.variant.kind == "nu":
            return f"v:{self.graph.labels[v]}"
        return f"v:{self.graph.labels[v]}:{j + 1}"

    @cached_property
    def gadget_tuples(self) -> np.ndarray:
        """(V, m^d, d + J) atom ids of each gadget tuple, indexed by the edge values a."""
        g, m, d = self.graph, self.m, self.variant.degree
        avals = np.array(list(itertools.product(range(m), repeat=d)), dtype=np.int64)
        W = self.variant.weights
        inc = np.array(g.inc, dtype=np.int64)  # (V, d)
        edge_part = inc[:, None, :] * m + avals[None, :, :]
        if not len(W):
            return edge_part
        vals = (avals @ W.T) % 3  # (m^d, J)
        base = g.E * m + (np.arange(g.V)[:, None] * self.J + np.arange(self.J)[None, :]) * 3
        vert_part = base[:, None, :] + vals[None, :, :]
        return np.concatenate([edge_part, vert_part], axis=2)

    @cached_property
    def gadget_sums(self) -> np.ndarray:
        m, d = self.m, self.variant.degree
        avals = np.array(list(itertools.product(range(m), repeat=d)), dtype=np.int64)
        return avals.sum(axis=1) % m

    def to_json(self) -> dict:
        data = self.structure.to_json()
        data["roles"] = {
            "variant": str(self.variant),
            "U": sorted(self.graph.labels[v] for v in self.U),
            "graph": self.graph.to_json(),
            "atoms": {self.atom_name(x): list(self.role(x)) for x in self.structure.universe},
        }
        return data


def relation_class(variant: Variant, total: int, s: int) -> int:
    """Index j of the relation R_j that a gadget tuple with value sum ``total`` joins at charge s."""
    if variant.kind == "maltsev":
        return 0 if (total - 2 * s) % 4 in (0, 1) else 1
    return (total + s) % 3


def build_cfi(graph: BaseGraph, U: Iterable[int], variant: Variant) -> CFIStructure:
    if graph.d != variant.degree:
        raise ValueError(f"{variant} needs a {variant.degree}-regular graph, got degree {graph.d}")
    U = frozenset(U)
    J = len(variant.weights)
    m = variant.modulus
    n_atoms = graph.E * m + graph.V * J * 3
    n_rel = 2 if variant.kind == "maltsev" else 3
    arity = variant.degree + J
    names = [f"R{j}" for j in range(n_rel)]
    rels: dict[str, list] = {n: [] for n in names}

    shell = CFIStructure(Structure.build([], [], {}), variant, graph, U)
    tuples = shell.gadget_tuples.tolist()
    sums = shell.gadget_sums.tolist()
    for v in graph.vertices:
        s = 1 if v in U else 0
        for t, total in zip(tuples[v], sums):
            rels[names[relation_class(variant, total, s)]].append(tuple(t))
    vocab = [RelSymbol(n, arity) for n in names]
    if variant.kind == "maltsev":
        vocab.append(RelSymbol("prec", 2))
        rels["prec"] = [
            (x, y) for x in range(n_atoms) for y in range(n_atoms) if x // m <= y // m
        ]
    labels = {x: shell.atom_name(x) for x in range(n_atoms)}
    return CFIStructure(Structure.build(vocab, range(n_atoms), rels, labels), variant, graph, U)


def twisted(graph: BaseGraph, variant: Variant) -> CFIStructure:
    return build_cfi(graph, {0}, variant)


def untwisted(graph: BaseGraph, variant: Variant) -> CFIStructure:
    return build_cfi(graph, (), variant)


def projection_map(S: CFIStructure) -> dict[int, int]:
    """h(e, a) = a and h(v, a) = a, the homomorphism of an uncharged instance to its template."""
    return {x: int(S.atom_val[x]) for x in S.structure.universe}


def tseitin_solvable(S: CFIStructure) -> bool:
    """Whether the Z_3 Tseitin system of the charges has a solution.

    On a bipartite base graph this decides whether the instance maps to its NU template.
    """
    from .linalg import solve, tseitin_system

    if S.variant.kind == "maltsev":
        raise ValueError("the Tseitin oracle covers the NU variants only")
    if S.graph.side is None:
        raise ValueError("the Tseitin oracle needs a bipartite base graph")
    charges = {v: S.charge(v) for v in S.graph.vertices}
    return solve(tseitin_system(S.graph, charges, 3)) is not None


def cfi_from_json(data: Mapping) -> CFIStructure:
    """Rebuild an instance from its JSON (with the "roles" section) and check it matches."""
    roles = data.get("roles")
    if roles is None:
        raise ValueError("structure carries no CFI roles")
    graph = BaseGraph.from_json(roles["graph"])
    idx = {l: i for i, l in enumerate(graph.labels)}
    S = build_cfi(graph, [idx[u] for u in roles["U"]], Variant.parse(roles["variant"]))
    plain = {k: v for k, v in data.items() if k != "roles"}
    if Structure.from_json(plain).to_json() != S.structure.to_json():
        raise ValueError("structure does not match the construction its roles describe")
    return S


# -- bijections -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EdgeBijection:
    """A bijection between the universes of two CFI instances over the same graph."""

    S: CFIStructure
    images: np.ndarray

    def __call__(self, x: int) -> int:
        return int(self.images[x])

    def as_dict(self) -> dict[int, int]:
        return {i: int(y) for i, y in enumerate(self.images)}

    def inverse(self) -> "EdgeBijection":
        inv = np.empty_like(self.images)
        inv[self.images] = np.arange(len(self.images))
        return EdgeBijection(self.S, inv)

    def then(self, g: "EdgeBijection") -> "EdgeBijection":
        """x -> g(self(x))."""
        return EdgeBijection(self.S, g.images[self.images])

    def is_edge_preserving(self) -> bool:
        loc = self.S.atom_loc
        return bool((loc[self.images] == loc).all())

    def edge_permutation(self, e: int) -> tuple[int, ...]:
        m = self.S.m
        return tuple(int(self.images[e * m + a]) - e * m for a in range(m))

    def classify_edge(self, e: int) -> tuple[str, int]:
        return classify_permutation_z4(self.edge_permutation(e)) if self.S.m == 4 else _classify_z3(
            self.edge_permutation(e)
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, EdgeBijection) and np.array_equal(self.images, other.images)

    def __hash__(self) -> int:
        return hash(self.images.tobytes())


def _classify_z3(pi: Sequence[int]) -> tuple[str, int]:
    c = (pi[0]) % 3
    if all(pi[x] == (x + c) % 3 for x in range(3)):
        return ("rotation", c)
    return ("other", 0)


def classify_permutation_z4(pi: Sequence[int]) -> tuple[str, int]:
    """("rotation", c) if pi(x) = x + c, ("reflection", a) if pi(x) = a - x, else ("other", 0)."""
    if sorted(pi) != [0, 1, 2, 3]:
        raise ValueError(f"{pi} is not a permutation of Z_4")
    c = pi[0]
    if all(pi[x] == (x + c) % 4 for x in range(4)):
        return ("rotation", c)
    if all(pi[x] == (c - x) % 4 for x in range(4)):
        return ("reflection", c)
    return ("other", 0)


def shift_images(S: CFIStructure, shifts: Sequence[int] | np.ndarray) -> np.ndarray:
    """Images of the rotation-type bijection with the given per-edge shifts."""
    g, m = S.graph, S.m
    c = np.asarray(shifts, dtype=np.int64) % m
    x = np.arange(S.n_atoms)
    out = np.empty(S.n_atoms, dtype=np.int64)
    ne = g.E * m
    out[:ne] = (x[:ne] // m) * m + (x[:ne] % m + c[x[:ne] // m]) % m
    if S.J:
        inc = np.array(g.inc, dtype=np.int64)
        vshift = (c[inc] @ S.variant.weights.T) % 3  # (V, J)
        y = x[ne:] - ne
        cls, a = y // 3, y % 3
        out[ne:] = ne + cls * 3 + (a + vshift.reshape(-1)[cls]) % 3
    return out


def cyclic_bijection(S: CFIStructure, shifts: Mapping[int, int] | Sequence[int]) -> EdgeBijection:
    if S.variant.kind == "maltsev":
        raise ValueError("cyclic bijections are defined for the near-unanimity variants")
    if isinstance(shifts, Mapping):
        shifts = [shifts.get(e, 0) for e in range(S.graph.E)]
    return EdgeBijection(S, shift_images(S, shifts))


def z4_images(S: CFIStructure, modes: Sequence[str] | str, shifts: Sequence[int]) -> np.ndarray:
    """Per-edge rotations (x + c) or reflections (c - x) on the Z_4 instance."""
    E = S.graph.E
    if isinstance(modes, str):
        modes = [modes] * E
    e = np.arange(E)[:, None]
    x = np.arange(4)[None, :]
    c = np.asarray(shifts, dtype=np.int64)[:, None]
    refl = np.array([mo == "reflection" for mo in modes])[:, None]
    vals = np.where(refl, c - x, x + c) % 4
    return (e * 4 + vals).reshape(-1)


def z4_bijection(S: CFIStructure, modes: Sequence[str] | str, shifts: Sequence[int]) -> EdgeBijection:
    return EdgeBijection(S, z4_images(S, modes, shifts))


def permutation_bijection(S: CFIStructure, perms: Mapping[int, Sequence[int]]) -> EdgeBijection:
    """Arbitrary per-edge permutations (identity elsewhere); vertex atoms fixed."""
    images = np.arange(S.n_atoms)
    m = S.m
    for e, pi in perms.items():
        for a in range(m):
            images[e * m + a] = e * m + pi[a]
    return EdgeBijection(S, images)


def path_shifts(graph: BaseGraph, start: int, path: Sequence[int], c: int, m: int) -> list[int]:
    """Alternating +c, -c along the path's edges, starting at ``start``."""
    shifts = [0] * graph.E
    path_vertices(graph, start, path)  # validates the walk
    if len(set(path)) != len(path):
        raise ValueError("path repeats an edge")
    sign = 1
    for e in path:
        shifts[e] = (shifts[e] + sign * c) % m
        sign = -sign
    return shifts


def path_bijection(S: CFIStructure, start: int, path: Sequence[int], c: int) -> EdgeBijection:
    verts = path_vertices(S.graph, start, path)
    if len(set(verts)) != len(verts):
        raise ValueError("not a simple path")
    return EdgeBijection(S, shift_images(S, path_shifts(S.graph, start, path, c, S.m)))


# -- classification -------------------------------------------------------


def gadget_classes(f: EdgeBijection, T: CFIStructure, vertices: Iterable[int] | None = None) -> dict[int, object]:
    """Explicit classification of f at each vertex (see classify_gadget_map)."""
    S = f.S
    vs = list(S.graph.vertices) if vertices is None else list(vertices)
    tup = S.gadget_tuples[vs]  # (n, m^d, d+J)
    if not (S.atom_loc[f.images[tup]] == S.atom_loc[tup]).all():
        raise ValueError("bijection is not edge-preserving at the requested vertices")
    img = f.images[tup]
    vals = S.atom_val[img]
    d = S.variant.degree
    m = S.m
    b = vals[:, :, :d]
    src_sum = S.gadget_sums[None, :]
    out: dict[int, object] = {}
    if S.variant.kind == "maltsev":
        s = np.array([S.charge(v) for v in vs])[:, None]
        t = np.array([T.charge(v) for v in vs])[:, None]
        cls_src = ((src_sum - 2 * s) % 4) // 2
        cls_img = ((b.sum(axis=2) - 2 * t) % 4) // 2
        same = (cls_src == cls_img).all(axis=1)
        opp = (cls_src != cls_img).all(axis=1)
        for i, v in enumerate(vs):
            out[v] = "preserves" if same[i] else "swaps" if opp[i] else "neither"
        return out
    W = S.variant.weights
    expect = (b @ W.T) % 3
    well = (vals[:, :, d:] == expect).all(axis=2).all(axis=1)
    delta = (src_sum - b.sum(axis=2)) % 3  # (n, m^d)
    const = (delta == delta[:, :1]).all(axis=1)
    for i, v in enumerate(vs):
        out[v] = int(delta[i, 0]) if well[i] and const[i] else None
    return out


def classify_gadget_map(f: EdgeBijection, v: int, S: CFIStructure, T: CFIStructure):
    """NU variants: delta with f an isomorphism A(v,s) -> A(v,s+delta), or None.
    Maltsev: "preserves", "swaps" or "neither" for the pair (R_0(v), R_1(v)) of S against T.
    """
    if f.S is not S:
        f = EdgeBijection(S, f.images)
    return gadget_classes(f, T, [v])[v]


def bad_vertices(f: EdgeBijection, T: CFIStructure) -> list[int]:
    """Vertices at which f is not a local isomorphism from its domain instance to T."""
    S = f.S
    cls = gadget_classes(f, T)
    if S.variant.kind == "maltsev":
        return [v for v, c in cls.items() if c != "preserves"]
    return [v for v, c in cls.items() if c is None or (S.charge(v) + c) % 3 != T.charge(v)]


# -- pebbles and paths ----------------------------------------------------


def touched_vertices(S: CFIStructure, atoms: Iterable[int]) -> set[int]:
    out: set[int] = set()
    for x in atoms:
        out.update(S.loc_vertices(int(S.atom_loc[x])))
    return out


def safe_vertices(S: CFIStructure, atoms: Iterable[int]) -> set[int]:
    g = S.graph
    if g.copy is None:
        raise ValueError("base graph has no copy metadata")
    dirty = {g.copy[v] for v in touched_vertices(S, atoms)}
    return {u for u in g.vertices if g.copy[u] not in dirty and g.partner[u] not in dirty}


def pebble_free_path(
    S: CFIStructure,
    src: int,
    dst: int,
    atoms: Iterable[int],
    forbidden_first: Iterable[int] = (),
) -> list[int] | None:
    locs = {int(S.atom_loc[x]) for x in atoms}
    E = S.graph.E
    bad_vertices_ = {(l - E) // S.J for l in locs if l >= E}
    forbidden = set(forbidden_first)
    allowed = [p for p in range(1, S.graph.d + 1) if p not in forbidden]
    return lex_shortest_path(
        S.graph, src, dst,
        vertex_ok=lambda v: v not in bad_vertices_,
        edge_ok=lambda e: e not in locs,
        first_positions=allowed,
    )
