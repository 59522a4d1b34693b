"""CSP templates: B_ell, B*_{r,ell}, uniform hypergraphs, cliques and parity templates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .linalg import build_separator_set
from .structures import RelSymbol, Structure


def u_vector(ell: int) -> tuple[int, ...]:
    return (0, 1, 2) + (0,) * (ell - 3)


def dot3(a, u) -> int:
    return sum(x * y for x, y in zip(a, u)) % 3


def template_nu(ell: int) -> Structure:
    if ell < 3:
        raise ValueError("ell must be at least 3")
    u = u_vector(ell)
    rels = {f"R{j}": [] for j in range(3)}
    for a in itertools.product(range(3), repeat=ell):
        rels[f"R{sum(a) % 3}"].append(a + (dot3(a, u),))
    return Structure.build([RelSymbol(f"R{j}", ell + 1) for j in range(3)], range(3), rels)


def template_nu_star(r: int, ell: int) -> Structure:
    if ell < 3 or r < ell:
        raise ValueError("need r >= ell >= 3")
    U = build_separator_set(ell, 2 * r + 1).vectors
    arity = 2 * r + 1 + len(U)
    rels = {f"R{j}": [] for j in range(3)}
    for a in itertools.product(range(3), repeat=2 * r + 1):
        rels[f"R{sum(a) % 3}"].append(a + tuple(dot3(a, u) for u in U))
    return Structure.build([RelSymbol(f"R{j}", arity) for j in range(3)], range(3), rels)


def star_arity_bound(r: int, ell: int) -> int:
    w = 2 * r + 1
    return w * (w // (ell - 1) + 2)


def uniform_hypergraph(r: int, m: int) -> Structure:
    """H^r_m on {1..m}; when m < r there are no hyperedges at all."""
    if r < 2 or m < 1:
        raise ValueError("need r >= 2 and m >= 1")
    tuples = itertools.permutations(range(1, m + 1), r)
    return Structure.build([RelSymbol("R", r)], range(1, m + 1), {"R": tuples})


def clique(m: int) -> Structure:
    return uniform_hypergraph(2, m)


def parity_template(r: int) -> Structure:
    if r < 3:
        raise ValueError("r must be at least 3")
    rels = {"R0": [], "R1": []}
    for a in itertools.product(range(2), repeat=r):
        rels[f"R{sum(a) % 2}"].append(a)
    return Structure.build([RelSymbol("R0", r), RelSymbol("R1", r)], range(2), rels)


@dataclass(frozen=True)
class TemplateSpec:
    kind: str  # nu | nu-star | hypergraph | clique | parity
    params: tuple[int, ...]

    BUILDERS = {
        "nu": (template_nu, 1),
        "nu-star": (template_nu_star, 2),
        "hypergraph": (uniform_hypergraph, 2),
        "clique": (clique, 1),
        "parity": (parity_template, 1),
    }

    def __post_init__(self) -> None:
        if self.kind not in self.BUILDERS:
            raise ValueError(f"unknown template kind {self.kind!r}")
        if len(self.params) != self.BUILDERS[self.kind][1]:
            raise ValueError(f"{self.kind} takes {self.BUILDERS[self.kind][1]} parameter(s)")

    @classmethod
    def parse(cls, text: str) -> "TemplateSpec":
        kind, _, rest = text.partition(":")
        params = tuple(int(x) for x in rest.split(",")) if rest else ()
        return cls(kind, params)

    def build(self) -> Structure:
        return self.BUILDERS[self.kind][0](*self.params)

    @property
    def arity(self) -> int:
        if self.kind == "nu":
            return self.params[0] + 1
        if self.kind == "nu-star":
            r, ell = self.params
            return 2 * r + 1 + build_separator_set(ell, 2 * r + 1).size
        if self.kind == "hypergraph":
            return self.params[0]
        if self.kind == "clique":
            return 2
        return self.params[0]
