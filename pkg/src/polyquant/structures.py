"""Finite relational structures, partial isomorphisms, isomorphism search and cores."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

ElementMap = Mapping[int, int]


class VocabularyMismatch(ValueError):
    pass


@dataclass(frozen=True, order=True)
class RelSymbol:
    name: str
    arity: int

    def __post_init__(self) -> None:
        # nullary symbols only arise from the star operator projecting everything away
        if self.arity < 0:
            raise ValueError(f"arity of {self.name!r} must be non-negative")


@dataclass(frozen=True)
class Structure:
    """A finite relational structure over integer elements.

    ``labels`` optionally maps elements to display names; it is carried along
    for serialization but does not take part in equality.
    """

    vocab: tuple[RelSymbol, ...]
    universe: tuple[int, ...]
    relations: Mapping[str, frozenset]
    labels: Mapping[int, str] | None = field(default=None, compare=False, hash=False)

    def __post_init__(self) -> None:
        names = [s.name for s in self.vocab]
        if len(set(names)) != len(names):
            raise ValueError("duplicate relation symbol")
        if set(self.relations) != set(names):
            raise ValueError("relations do not match vocabulary")
        uni = set(self.universe)
        for sym in self.vocab:
            for t in self.relations[sym.name]:
                if len(t) != sym.arity:
                    raise ValueError(f"tuple {t} has wrong length for {sym.name}")
                if not uni.issuperset(t):
                    raise ValueError(f"tuple {t} leaves the universe")

    @classmethod
    def build(
        cls,
        vocab: Iterable[RelSymbol | tuple[str, int]],
        universe: Iterable[int],
        relations: Mapping[str, Iterable[Sequence[int]]],
        labels: Mapping[int, str] | None = None,
    ) -> "Structure":
        syms = tuple(s if isinstance(s, RelSymbol) else RelSymbol(*s) for s in vocab)
        rels = {s.name: frozenset(tuple(t) for t in relations.get(s.name, ())) for s in syms}
        return cls(syms, tuple(sorted(set(universe))), rels, dict(labels) if labels else None)

    @property
    def arity(self) -> dict[str, int]:
        return {s.name: s.arity for s in self.vocab}

    @property
    def max_arity(self) -> int:
        return max((s.arity for s in self.vocab), default=0)

    def tuples(self, name: str) -> list[tuple]:
        return sorted(self.relations[name])

    def label(self, x: int) -> str:
        if self.labels and x in self.labels:
            return self.labels[x]
        return str(x)

    def with_relations(self, relations: Mapping[str, Iterable[Sequence[int]]]) -> "Structure":
        return Structure.build(self.vocab, self.universe, relations, self.labels)

    def __len__(self) -> int:
        return len(self.universe)

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        lab = self.label
        return {
            "vocab": [{"name": s.name, "arity": s.arity} for s in self.vocab],
            "universe": [lab(x) for x in self.universe],
            "relations": {
                s.name: [[lab(x) for x in t] for t in self.tuples(s.name)] for s in self.vocab
            },
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Structure":
        vocab = [RelSymbol(v["name"], int(v["arity"])) for v in data["vocab"]]
        names = [str(x) for x in data["universe"]]
        if len(set(names)) != len(names):
            raise ValueError("duplicate universe element")
        if all(n.lstrip("-").isdigit() and str(int(n)) == n for n in names):
            ids = {n: int(n) for n in names}
            labels = None
        else:
            ids = {n: i for i, n in enumerate(names)}
            labels = {i: n for n, i in ids.items()}
        rels = {}
        for s in vocab:
            try:
                rels[s.name] = [tuple(ids[str(x)] for x in t) for t in data["relations"].get(s.name, [])]
            except KeyError as exc:
                raise ValueError(f"unknown element {exc} in relation {s.name}") from None
        return cls.build(vocab, ids.values(), rels, labels)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _same_vocab(A: Structure, B: Structure) -> None:
    if sorted(A.vocab) != sorted(B.vocab):
        raise VocabularyMismatch("structures have different vocabularies")


def leq(A: Structure, B: Structure) -> bool:
    _same_vocab(A, B)
    if set(A.universe) != set(B.universe):
        return False
    return all(A.relations[s.name] <= B.relations[s.name] for s in A.vocab)


def union(A: Structure, B: Structure) -> Structure:
    _same_vocab(A, B)
    labels = {**(B.labels or {}), **(A.labels or {})} or None
    rels = {s.name: A.relations[s.name] | B.relations[s.name] for s in A.vocab}
    return Structure.build(A.vocab, set(A.universe) | set(B.universe), rels, labels)


def induced(A: Structure, S: Iterable[int]) -> Structure:
    S = set(S)
    if not S <= set(A.universe):
        raise ValueError("subset is not contained in the universe")
    rels = {n: [t for t in R if S.issuperset(t)] for n, R in A.relations.items()}
    labels = {x: l for x, l in A.labels.items() if x in S} if A.labels else None
    return Structure.build(A.vocab, S, rels, labels)


def is_homomorphism(A: Structure, B: Structure, h: ElementMap) -> bool:
    if any(x not in h for x in A.universe):
        return False
    return all(
        tuple(h[x] for x in t) in B.relations[n] for n, R in A.relations.items() for t in R
    )


def is_partial_isomorphism(A: Structure, B: Structure, f: ElementMap) -> bool:
    dom = set(f)
    if not dom <= set(A.universe) or not set(f.values()) <= set(B.universe):
        return False
    if len(set(f.values())) != len(dom):
        return False
    inv = {b: a for a, b in f.items()}
    img = set(inv)
    for s in A.vocab:
        RA, RB = A.relations[s.name], B.relations[s.name]
        for t in RA:
            if dom.issuperset(t) and tuple(f[x] for x in t) not in RB:
                return False
        for t in RB:
            if img.issuperset(t) and tuple(inv[y] for y in t) not in RA:
                return False
    return True


def find_isomorphism(
    A: Structure,
    B: Structure,
    class_constraint: tuple[Sequence[Iterable[int]], Sequence[Iterable[int]]] | None = None,
) -> dict[int, int] | None:
    """Complete backtracking search for an isomorphism A -> B.

    ``class_constraint`` pairs a partition of A's universe with one of B's;
    elements of the i-th class of A may only map into the i-th class of B.
    """
    if sorted(A.vocab) != sorted(B.vocab) or len(A.universe) != len(B.universe):
        return None
    if any(len(A.relations[s.name]) != len(B.relations[s.name]) for s in A.vocab):
        return None

    cand: dict[int, set[int]] = {x: set(B.universe) for x in A.universe}
    if class_constraint is not None:
        for ca, cb in zip(*class_constraint):
            cb = set(cb)
            for x in ca:
                cand[x] &= cb

    # cheap invariant: how often an element occurs at each position of each relation
    def profile(S: Structure) -> dict[int, tuple]:
        counts = {x: [] for x in S.universe}
        for s in sorted(S.vocab):
            for i in range(s.arity):
                occ: dict[int, int] = {}
                for t in S.relations[s.name]:
                    occ[t[i]] = occ.get(t[i], 0) + 1
                for x in S.universe:
                    counts[x].append(occ.get(x, 0))
        return {x: tuple(c) for x, c in counts.items()}

    pa, pb = profile(A), profile(B)
    for x in A.universe:
        cand[x] = {y for y in cand[x] if pa[x] == pb[y]}
        if not cand[x]:
            return None

    # constraint lists: each tuple of A together with its relation in B
    occurs: dict[int, list[tuple[tuple, frozenset]]] = {x: [] for x in A.universe}
    for s in A.vocab:
        RB = B.relations[s.name]
        for t in A.relations[s.name]:
            for x in set(t):
                occurs[x].append((t, RB))

    order = {x: i for i, x in enumerate(A.universe)}

    def search(h: dict[int, int], dom: dict[int, set[int]]) -> dict[int, int] | None:
        if len(h) == len(A.universe):
            return dict(h)
        x = min((v for v in dom if v not in h), key=lambda v: (len(dom[v]), order[v]))
        used = set(h.values())
        for y in sorted(dom[x]):
            if y in used:
                continue
            h[x] = y
            ok = True
            newdom = None
            for t, RB in occurs[x]:
                free = [z for z in t if z not in h]
                if not free:
                    if tuple(h[w] for w in t) not in RB:
                        ok = False
                        break
                elif len(set(free)) == 1:
                    z = free[0]
                    if newdom is None:
                        newdom = dict(dom)
                    allowed = {
                        c for c in newdom[z]
                        if tuple(c if w == z else h[w] for w in t) in RB
                    }
                    newdom[z] = allowed
                    if not allowed:
                        ok = False
                        break
            if ok:
                res = search(h, newdom if newdom is not None else dom)
                if res is not None:
                    return res
            del h[x]
        return None

    return search({}, cand)


def compute_core(A: Structure) -> Structure:
    from .csp import find_homomorphism

    C = A
    shrunk = True
    while shrunk:
        shrunk = False
        for x in C.universe:
            rest = induced(C, [y for y in C.universe if y != x])
            h = find_homomorphism(C, rest)
            if h is not None:
                C = induced(C, set(h.values()))
                shrunk = True
                break
    return C


def load_structure(path: str) -> Structure:
    with open(path) as fh:
        data = json.load(fh)
    return Structure.from_json(data)


def dump_structure(S: Structure, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(S.to_json(), fh, indent=1)
        fh.write("\n")
