"""Backtracking homomorphism search with generalized arc consistency."""

from __future__ import annotations

import itertools
import sys
import time
from dataclasses import dataclass
from typing import Mapping

from .structures import RelSymbol, Structure, VocabularyMismatch, is_homomorphism


class BudgetExhausted(RuntimeError):
    """The search gave up before reaching a verdict."""

    def __init__(self, nodes: int, reason: str = "node budget"):
        super().__init__(f"{reason} exhausted after {nodes} search nodes")
        self.nodes = nodes
        self.reason = reason


@dataclass(frozen=True)
class HomSearchConfig:
    ordering: str = "min-domain"  # or "static"
    propagation: str = "gac"  # or "none"
    node_budget: int = 10**7
    time_limit: float | None = None  # seconds; exceeding it also counts as budget exhaustion

    def __post_init__(self) -> None:
        if self.node_budget <= 0:
            raise ValueError("node budget must be positive")
        if self.ordering not in ("min-domain", "static"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.propagation not in ("gac", "none"):
            raise ValueError(f"unknown propagation level {self.propagation!r}")


@dataclass
class SearchStats:
    nodes: int = 0


def find_homomorphism(
    A: Structure,
    B: Structure,
    cfg: HomSearchConfig | None = None,
    stats: SearchStats | None = None,
) -> dict[int, int] | None:
    """A homomorphism A -> B, or None if there is none.

    Raises BudgetExhausted if the node budget or time limit runs out first.
    """
    cfg = cfg or HomSearchConfig()
    stats = stats if stats is not None else SearchStats()
    if sorted(A.vocab) != sorted(B.vocab):
        raise VocabularyMismatch("structures have different vocabularies")

    xs = list(A.universe)
    vidx = {x: i for i, x in enumerate(xs)}
    ys = list(B.universe)
    n = len(xs)
    if n == 0:
        return {}
    if not ys:
        return None
    full = (1 << len(ys)) - 1
    yidx = {y: i for i, y in enumerate(ys)}

    scopes: list[tuple[int, ...]] = []
    allowed: list[list[tuple[int, ...]]] = []
    group: list[int] = []  # constraints with equal allowed lists share a support cache
    groups: dict[tuple, int] = {}
    for sym in A.vocab:
        RB = [tuple(yidx[y] for y in t) for t in sorted(B.relations[sym.name])]
        for t in sorted(A.relations[sym.name]):
            if not t:
                if not RB:
                    return None
                continue
            scope = tuple(vidx[x] for x in t)
            # positions carrying the same variable must carry the same value
            eq = [(i, j) for i in range(len(t)) for j in range(i) if scope[i] == scope[j]]
            ok = [b for b in RB if all(b[i] == b[j] for i, j in eq)]
            if not ok:
                return None
            scopes.append(scope)
            allowed.append(ok)
            group.append(groups.setdefault(tuple(ok), len(groups)))
    supports: list[dict] = [{} for _ in groups]

    watch: list[list[int]] = [[] for _ in range(n)]
    for ci, scope in enumerate(scopes):
        for v in set(scope):
            watch[v].append(ci)

    deadline = time.monotonic() + cfg.time_limit if cfg.time_limit else None

    def revise(dom: list[int], ci: int, changed: list[int]) -> bool:
        scope = scopes[ci]
        key = tuple(dom[v] for v in scope)
        cache = supports[group[ci]]
        sup = cache.get(key)
        if sup is None:
            sup = [0] * len(scope)
            for b in allowed[ci]:
                for i, d in enumerate(key):
                    if not (d >> b[i]) & 1:
                        break
                else:
                    for i in range(len(scope)):
                        sup[i] |= 1 << b[i]
            if len(cache) < 1 << 20:
                cache[key] = sup
        for i, v in enumerate(scope):
            nd = dom[v] & sup[i]
            if nd != dom[v]:
                if not nd:
                    return False
                dom[v] = nd
                changed.append(v)
        return True

    def propagate(dom: list[int], queue: list[int]) -> bool:
        pending = set(queue)
        while queue:
            ci = queue.pop()
            pending.discard(ci)
            changed: list[int] = []
            if not revise(dom, ci, changed):
                return False
            for v in changed:
                for cj in watch[v]:
                    if cj != ci and cj not in pending:
                        pending.add(cj)
                        queue.append(cj)
        return True

    def check_assigned(dom: list[int], v: int) -> bool:
        for ci in watch[v]:
            scope = scopes[ci]
            if all(dom[w] & (dom[w] - 1) == 0 for w in scope):
                vals = tuple(dom[w].bit_length() - 1 for w in scope)
                if vals not in allowed[ci]:
                    return False
        return True

    dom0 = [full] * n
    if cfg.propagation == "gac":
        if not propagate(dom0, list(range(len(scopes)))):
            return None
    else:
        for ci, scope in enumerate(scopes):
            if len(set(scope)) == 1:  # unary constraints prune directly
                v = scope[0]
                dom0[v] &= sum(1 << b[0] for b in allowed[ci])
        if not all(dom0):
            return None

    def pick(dom: list[int]) -> int:
        best, best_size = -1, None
        for v in range(n):
            d = dom[v]
            if d & (d - 1):
                if cfg.ordering == "static":
                    return v
                size = bin(d).count("1")
                if best_size is None or size < best_size:
                    best, best_size = v, size
                    if size == 2:
                        break
        return best

    def search(dom: list[int]) -> list[int] | None:
        v = pick(dom)
        if v < 0:
            if cfg.propagation == "none" and not all(check_assigned(dom, w) for w in range(n)):
                return None
            return dom
        d = dom[v]
        while d:
            bit = d & -d
            d ^= bit
            stats.nodes += 1
            if stats.nodes > cfg.node_budget:
                raise BudgetExhausted(stats.nodes)
            if deadline is not None and stats.nodes % 256 == 0 and time.monotonic() > deadline:
                raise BudgetExhausted(stats.nodes, "time limit")
            child = list(dom)
            child[v] = bit
            if cfg.propagation == "gac":
                if not propagate(child, list(watch[v])):
                    continue
            elif not check_assigned(child, v):
                continue
            res = search(child)
            if res is not None:
                return res
        return None

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * n + 1000))
    res = search(dom0)
    if res is None:
        return None
    return {xs[i]: ys[res[i].bit_length() - 1] for i in range(n)}


def enumerate_homomorphism(A: Structure, B: Structure) -> dict[int, int] | None:
    """Brute-force oracle: the first homomorphism in lexicographic map order."""
    if sorted(A.vocab) != sorted(B.vocab):
        raise VocabularyMismatch("structures have different vocabularies")
    xs = list(A.universe)
    for img in itertools.product(B.universe, repeat=len(xs)):
        h = dict(zip(xs, img))
        if is_homomorphism(A, B, h):
            return h
    return None


def csp_member(A: Structure, template: Structure, cfg: HomSearchConfig | None = None) -> bool:
    return find_homomorphism(A, template, cfg) is not None


def compose(h: Mapping[int, int], g: Mapping[int, int]) -> dict[int, int]:
    """The map x -> g(h(x))."""
    return {x: g[y] for x, y in h.items()}


def hypergraph_to_graph(A: Structure) -> Structure:
    if len(A.vocab) != 1:
        raise VocabularyMismatch("expected a single relation symbol")
    (sym,) = A.vocab
    edge_name = sym.name
    edges = {
        (t[i], t[j])
        for t in A.relations[sym.name]
        for i in range(sym.arity)
        for j in range(sym.arity)
        if i != j
    }
    return Structure.build([RelSymbol(edge_name, 2)], A.universe, {edge_name: edges}, A.labels)
