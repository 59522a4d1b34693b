"""Positions, configurations, vectorized partial-isomorphism checks and move enumeration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ..structures import Structure, is_partial_isomorphism

UNSET = -1


class BudgetExceeded(RuntimeError):
    """The requested check or search does not fit the budget."""


class NoSafeEscape(RuntimeError):
    """Duplicator's strategy found no admissible escape vertex (the base graph is too small)."""


@dataclass(frozen=True)
class GameConfig:
    kind: str  # "bijection" | "maltsev"
    k: int
    r: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("bijection", "maltsev"):
            raise ValueError(f"unknown game {self.kind!r}")
        if self.k < 1:
            raise ValueError("need at least one variable")
        if self.kind == "maltsev" and self.r == 0:
            object.__setattr__(self, "r", self.k)
        if not 1 <= self.r <= self.k:
            raise ValueError(f"need 1 <= r <= k, got r={self.r}, k={self.k}")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.k))

    def to_json(self) -> dict:
        return {"game": self.kind, "k": self.k, "r": self.r}


@dataclass(frozen=True)
class Position:
    """Partial assignments of the k variables; None marks an unassigned variable."""

    alpha: tuple
    beta: tuple

    def __post_init__(self) -> None:
        if len(self.alpha) != len(self.beta):
            raise ValueError("alpha and beta range over different variable sets")
        if any((a is None) != (b is None) for a, b in zip(self.alpha, self.beta)):
            raise ValueError("dom alpha must equal dom beta")

    @classmethod
    def empty(cls, k: int) -> "Position":
        return cls((None,) * k, (None,) * k)

    @property
    def dom(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.alpha) if a is not None)

    def update(self, ys: Sequence[int], a: Sequence[int], b: Sequence[int]) -> "Position":
        if not len(ys) == len(a) == len(b):
            raise ValueError("variable and element tuples differ in length")
        if len(set(ys)) != len(ys):
            raise ValueError("variables must be distinct")
        alpha, beta = list(self.alpha), list(self.beta)
        for y, x, z in zip(ys, a, b):
            alpha[y], beta[y] = int(x), int(z)
        return Position(tuple(alpha), tuple(beta))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        al = np.array([UNSET if a is None else a for a in self.alpha], dtype=np.int64)
        be = np.array([UNSET if b is None else b for b in self.beta], dtype=np.int64)
        return al, be

    def atoms(self) -> set[int]:
        return {a for a in self.alpha if a is not None} | {b for b in self.beta if b is not None}

    def swapped(self) -> "Position":
        return Position(self.beta, self.alpha)

    def key(self) -> tuple:
        # variables are indexed in name order, so this is already canonical
        return (self.alpha, self.beta)

    def to_json(self, names_a=None, names_b=None) -> dict:
        def enc(xs, names):
            return [None if x is None else (names(x) if names else x) for x in xs]

        return {"alpha": enc(self.alpha, names_a), "beta": enc(self.beta, names_b)}


def position_map(pos: Position) -> dict[int, int] | None:
    """alpha -> beta as a map on elements, or None if it is not even a function."""
    f: dict[int, int] = {}
    for a, b in zip(pos.alpha, pos.beta):
        if a is None:
            continue
        if f.setdefault(a, b) != b:
            return None
    return f


def spoiler_wins_now(pos: Position, A: Structure, B: Structure, checker: "PartialIsoChecker | None" = None) -> bool:
    if checker is not None:
        al, be = pos.arrays()
        return not bool(checker.batch(al[None, :], be[None, :])[0])
    f = position_map(pos)
    return f is None or not is_partial_isomorphism(A, B, f)


def bp_apply_round(pos: Position, f, ys: Sequence[int], a: Sequence[int], r: int | None = None) -> Position:
    """alpha[a/ys], beta[f(a)/ys]."""
    if r is not None and len(ys) > r:
        raise ValueError(f"at most {r} pebbles may move per round")
    return pos.update(ys, a, [f(x) for x in a])


class PartialIsoChecker:
    """Vectorized test of alpha -> beta being a partial isomorphism A -> B.

    Only relation tuples with at most k distinct entries can lie inside a
    pebbled set, so only those are indexed.
    """

    def __init__(self, A: Structure, B: Structure, k: int):
        if sorted(A.vocab) != sorted(B.vocab):
            raise ValueError("structures have different vocabularies")
        self.k = k
        self.n = max(max(A.universe, default=0), max(B.universe, default=0)) + 1
        self.checks: list[tuple] = []  # (compression, member of A, member of B, base, pebble patterns)
        for sym in sorted(A.vocab):
            small = [
                t for S in (A, B) for t in S.relations[sym.name] if 0 < len(set(t)) <= k
            ]
            if not small:
                continue
            # compress the universe to the elements that occur, 0 meaning "occurs nowhere"
            elems = sorted({x for t in small for x in t})
            comp = np.zeros(self.n, dtype=np.int64)
            comp[elems] = np.arange(1, len(elems) + 1)
            base = len(elems) + 1
            if base ** sym.arity >= 2**62:
                raise ValueError(f"relation {sym.name} too wide for the vectorized check")
            types = {self._eq_type(t) for t in small}
            members = []
            for S in (A, B):
                rows = [t for t in S.relations[sym.name] if 0 < len(set(t)) <= k]
                codes = self._code(comp[np.array(rows, dtype=np.int64)], base) if rows else np.zeros(0, np.int64)
                members.append(self._member(codes, base ** sym.arity))
            pats = [
                list(pat)
                for pat in itertools.product(range(k), repeat=sym.arity)
                if any(self._refines(pat, ty) for ty in types)
            ]
            if pats:
                self.checks.append((comp, members[0], members[1], base, pats))

    @staticmethod
    def _member(codes: np.ndarray, size: int):
        """Dense lookup table when small, else the sorted codes for np.isin."""
        if size <= 1 << 24:
            table = np.zeros(size, dtype=bool)
            table[codes] = True
            return table
        return np.unique(codes)

    @staticmethod
    def _lookup(member, codes: np.ndarray) -> np.ndarray:
        if member.dtype == bool:
            return member[codes]
        return np.isin(codes, member)

    @staticmethod
    def _eq_type(t) -> tuple[int, ...]:
        first: dict = {}
        return tuple(first.setdefault(x, len(first)) for x in t)

    @staticmethod
    def _refines(pat, ty) -> bool:
        """Could a tuple of equality type ``ty`` arise from pebble pattern ``pat``?"""
        return all(ty[i] == ty[j] for i in range(len(pat)) for j in range(i) if pat[i] == pat[j])

    @staticmethod
    def _code(rows: np.ndarray, base: int) -> np.ndarray:
        out = np.zeros(rows.shape[0], dtype=np.int64)
        for i in range(rows.shape[1]):
            out = out * base + rows[:, i]
        return out

    def batch(self, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Boolean array: row i is a partial isomorphism. Unassigned entries are UNSET."""
        alpha = np.asarray(alpha, dtype=np.int64)
        beta = np.asarray(beta, dtype=np.int64)
        setm = alpha != UNSET
        ok = np.ones(alpha.shape[0], dtype=bool)
        for i in range(alpha.shape[1]):
            for j in range(i):
                both = setm[:, i] & setm[:, j]
                ok &= ~both | ((alpha[:, i] == alpha[:, j]) == (beta[:, i] == beta[:, j]))
        for comp, mem_a, mem_b, base, pats in self.checks:
            ca_all = comp[np.where(setm, alpha, 0)]
            cb_all = comp[np.where(setm, beta, 0)]
            for pat in pats:
                live = np.all(setm[:, pat], axis=1)
                if not live.any():
                    continue
                ina = self._lookup(mem_a, self._code(ca_all[:, pat], base))
                inb = self._lookup(mem_b, self._code(cb_all[:, pat], base))
                ok &= ~live | (ina == inb)
        return ok


# -- move enumeration -----------------------------------------------------


def variable_tuples(k: int, r: int) -> list[tuple[int, ...]]:
    """All tuples of 1..r distinct variables, ordered by length then lexicographically."""
    return [ys for s in range(1, r + 1) for ys in itertools.permutations(range(k), s)]


def element_tuples(n: int, s: int) -> np.ndarray:
    """All of n^s as an (n^s, s) array in lexicographic order."""
    if s == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((n,) * s, dtype=np.int64).reshape(s, -1)
    return grids.T.copy()


def move_count(k: int, r: int, n: int) -> int:
    return sum(len(list(itertools.permutations(range(k), s))) * n**s for s in range(1, r + 1))


def iter_move_blocks(
    k: int, r: int, n: int, budget: int, rng: np.random.Generator
) -> tuple[bool, int, Iterator[tuple[tuple[int, ...], np.ndarray]]]:
    """(exhaustive, total, blocks): per variable tuple an array of element tuples.

    Exhaustive when the full move space fits the budget, otherwise a uniform
    sample of ``budget`` moves from the whole product space.
    """
    vts = variable_tuples(k, r)
    sizes = [n ** len(ys) for ys in vts]
    total = sum(sizes)
    if total <= budget:
        return True, total, ((ys, element_tuples(n, len(ys))) for ys in vts)
    idx = np.sort(rng.integers(0, total, size=budget))
    bounds = np.cumsum([0] + sizes)

    def blocks():
        for t, ys in enumerate(vts):
            sel = idx[(idx >= bounds[t]) & (idx < bounds[t + 1])] - bounds[t]
            if len(sel):
                digits = np.stack(np.unravel_index(sel, (n,) * len(ys)), axis=1).astype(np.int64)
                yield ys, digits

    return False, total, blocks()


def assign(base: np.ndarray, ys: Sequence[int], vals: np.ndarray) -> np.ndarray:
    """Rows of ``base`` (broadcast) with columns ys overwritten by vals."""
    out = np.repeat(base[None, :], vals.shape[0], axis=0) if base.ndim == 1 else base.copy()
    for col, y in enumerate(ys):
        out[:, y] = vals[:, col]
    return out


@dataclass
class Report:
    name: str
    total_moves: int = 0
    checked: int = 0
    exhaustive: bool = True
    violations: int = 0
    examples: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    MAX_EXAMPLES = 20

    def add(self, other: "Report") -> None:
        self.total_moves += other.total_moves
        self.checked += other.checked
        self.exhaustive &= other.exhaustive
        self.violations += other.violations
        room = self.MAX_EXAMPLES - len(self.examples)
        self.examples.extend(other.examples[:room])

    def note(self, what: str) -> None:
        if len(self.examples) < self.MAX_EXAMPLES:
            self.examples.append(what)

    def flag(self, what: str) -> None:
        self.violations += 1
        self.note(what)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "coverage": "exhaustive" if self.exhaustive else "sampled",
            "total_moves": self.total_moves,
            "checked": self.checked,
            "violations": self.violations,
            "examples": list(self.examples),
            **self.extra,
        }
