"""Near-unanimity and Maltsev partial operations, closures and the star operator."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .structures import RelSymbol, Structure, leq

Row = tuple


@dataclass(frozen=True)
class PartialOpFamily:
    """``kind`` is "nu" (with arity ``ell``) or "maltsev" (arity 3)."""

    kind: str
    ell: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ("nu", "maltsev"):
            raise ValueError(f"unknown family {self.kind!r}")
        if self.kind == "nu" and self.ell < 3:
            raise ValueError("near-unanimity needs arity at least 3")
        if self.kind == "maltsev" and self.ell != 3:
            raise ValueError("the Maltsev operation is ternary")

    @property
    def arity(self) -> int:
        return self.ell

    def __call__(self, *args):
        if self.kind == "nu":
            return eval_nu(self.ell, args)
        return eval_maltsev(*args)

    def __str__(self) -> str:
        return f"NU({self.ell})" if self.kind == "nu" else "Maltsev"


def NU(ell: int) -> PartialOpFamily:
    return PartialOpFamily("nu", ell)


MALTSEV = PartialOpFamily("maltsev")


def eval_nu(ell: int, args: Sequence):
    if ell < 3:
        raise ValueError("near-unanimity needs arity at least 3")
    if len(args) != ell:
        raise ValueError(f"expected {ell} arguments, got {len(args)}")
    value, count = Counter(args).most_common(1)[0]
    return value if count >= ell - 1 else None


def eval_maltsev(a, b, c):
    if a == b:
        return c
    if b == c:
        return a
    return None


def apply_columnwise(p: PartialOpFamily, rows: Sequence[Row]) -> Row | None:
    if len(rows) != p.arity:
        raise ValueError(f"{p} takes {p.arity} rows, got {len(rows)}")
    if len({len(r) for r in rows}) > 1:
        raise ValueError("rows have different lengths")
    out = []
    for col in zip(*rows):
        v = p(*col)
        if v is None:
            return None
        out.append(v)
    return tuple(out)


def _nu_image(ell: int, R: Sequence[Row]) -> set[Row]:
    # Depth-first choice of rows, discarding a prefix as soon as some column
    # can no longer have ell-1 equal entries.
    out: set[Row] = set()
    if not R:
        return out
    width = len(R[0])

    def extend(chosen: list[Row], counts: list[Counter]) -> None:
        depth = len(chosen)
        if depth == ell:
            out.add(tuple(c.most_common(1)[0][0] for c in counts))
            return
        for t in R:
            new = []
            ok = True
            for j in range(width):
                c = counts[j].copy()
                c[t[j]] += 1
                if len(c) > 2 or (len(c) == 2 and min(c.values()) > 1):
                    ok = False
                    break
                new.append(c)
            if ok:
                extend(chosen + [t], new)

    extend([], [Counter() for _ in range(width)])
    return out


def _maltsev_image(R: Sequence[Row]) -> set[Row]:
    out: set[Row] = set()
    for a in R:
        for b in R:
            # columns where a and b differ force c to agree with b there
            diff = [j for j in range(len(a)) if a[j] != b[j]]
            for c in R:
                if all(c[j] == b[j] for j in diff):
                    out.add(tuple(cj if aj == bj else aj for aj, bj, cj in zip(a, b, c)))
    return out


def apply_to_relation(p: PartialOpFamily, R: Iterable[Row]) -> set[Row]:
    rows = sorted(set(map(tuple, R)))
    if len({len(r) for r in rows}) > 1:
        raise ValueError("relation has tuples of different lengths")
    if not rows:
        return set()
    if len(rows[0]) == 0:
        return {()}
    if p.kind == "nu":
        return _nu_image(p.ell, rows)
    return _maltsev_image(rows)


def apply_to_structure(p: PartialOpFamily, A: Structure) -> Structure:
    return A.with_relations({n: apply_to_relation(p, R) for n, R in A.relations.items()})


def is_partial_polymorphism(p: PartialOpFamily, A: Structure) -> bool:
    return leq(apply_to_structure(p, A), A)


def majority_closure_check(R: Iterable[Row], limit: int = 20) -> tuple[int, list[Row]]:
    """Exhaustive NU(3) check of a relation over Z_3, vectorized.

    Majority is symmetric, so sorted row triples suffice. Returns the number
    of triples examined and up to ``limit`` images that fall outside R.
    """
    T = np.array(sorted(set(map(tuple, R))), dtype=np.int8)
    if not len(T):
        return 0, []
    n, W = T.shape
    if T.min() < 0 or T.max() > 2 or W > 39:
        raise ValueError("expected a relation over Z_3 of arity at most 39")
    pw = 3 ** np.arange(W, dtype=np.int64)
    codes = np.sort(T.astype(np.int64) @ pw)
    eq = T[:, None, :] == T[None, :, :]
    checked, bad = 0, []
    for i in range(n):
        S = T[i:]
        e1 = eq[i, i:]  # rows agreeing with row i, per column
        e2, e3 = e1[:, None, :], e1[None, :, :]
        defined = np.all(e2 | e3 | eq[i:, i:], axis=2)
        img = np.where(e2 | e3, T[i], S[:, None, :])[defined]
        c = img.astype(np.int64) @ pw
        pos = np.minimum(np.searchsorted(codes, c), len(codes) - 1)
        miss = codes[pos] != c
        checked += int(defined.size)
        for row in img[miss]:
            t = tuple(int(x) for x in row)
            if len(bad) < limit and t not in bad:
                bad.append(t)
    return checked, sorted(bad)


def close_relation(p: PartialOpFamily, R: Iterable[Row]) -> tuple[frozenset, int]:
    """Least p-closed superset of R, with the number of passes it took."""
    cur = set(map(tuple, R))
    passes = 0
    while True:
        passes += 1
        new = apply_to_relation(p, cur) - cur
        if not new:
            return frozenset(cur), passes
        cur |= new


def close_structure(p: PartialOpFamily, A: Structure) -> Structure:
    return A.with_relations({n: close_relation(p, R)[0] for n, R in A.relations.items()})


def close_tuple_set_maltsev(P: Iterable[Row]) -> frozenset:
    return close_relation(MALTSEV, P)[0]


def project_relation(R: Iterable[Row], interval: tuple[int, int]) -> set[Row]:
    """Drop coordinates i..j (1-based, inclusive) from every tuple."""
    i, j = interval
    R = list(R)
    r = len(R[0]) if R else j
    if not 1 <= i <= j <= r:
        raise ValueError(f"interval {interval} out of range for arity {r}")
    return {t[: i - 1] + t[j:] for t in R}


@dataclass(frozen=True)
class IntervalDivision:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        nxt = 1
        for i, j in self.intervals:
            if i != nxt or j < i:
                raise ValueError(f"intervals {self.intervals} are not a consecutive division")
            nxt = j + 1
        if not self.intervals:
            raise ValueError("empty division")

    @classmethod
    def of(cls, pairs: Iterable[Sequence[int]]) -> "IntervalDivision":
        return cls(tuple((int(i), int(j)) for i, j in pairs))

    @property
    def r(self) -> int:
        return self.intervals[-1][1]

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def to_json(self) -> list[list[int]]:
        return [[i, j] for i, j in self.intervals]


def default_division(r: int, ell: int) -> IntervalDivision:
    if ell < 3 or r < ell:
        raise ValueError("need r >= ell >= 3")
    base, extra = divmod(r, ell)
    out, start = [], 1
    for n in range(ell):
        size = base + (1 if n < extra else 0)
        out.append((start, start + size - 1))
        start += size
    return IntervalDivision(tuple(out))


def starred_name(name: str, n: int) -> str:
    return f"{name}#{n}"


def star_operator(C: Structure, division: IntervalDivision) -> Structure:
    if C.max_arity > division.r:
        raise ValueError(f"division covers [{division.r}] but arity {C.max_arity} occurs")
    vocab, rels = [], {}
    for sym in C.vocab:
        a = sym.arity
        R = C.relations[sym.name]
        for n, (i, j) in enumerate(division, start=1):
            name = starred_name(sym.name, n)
            if j <= a:
                width, tuples = a - (j - i + 1), project_relation(R, (i, j)) if R else set()
            elif i <= a:
                width, tuples = i - 1, project_relation(R, (i, a)) if R else set()
            else:
                width, tuples = a, set()
            vocab.append(RelSymbol(name, width))
            rels[name] = tuples
    return Structure.build(vocab, C.universe, rels, C.labels)


def full_reduction(A: Structure, ell: int, division: IntervalDivision) -> Structure:
    return star_operator(close_structure(NU(ell), A), division)


def verify_arity_trick(
    R: Iterable[Row], ell: int, division: IntervalDivision, domain: Iterable | None = None
) -> bool:
    R = set(map(tuple, R))
    if len(division) != ell:
        raise ValueError(f"division must have {ell} intervals")
    if apply_to_relation(NU(ell), R) - R:
        raise ValueError("relation is not closed under the near-unanimity operation")
    r = division.r
    dom = sorted(set(domain) if domain is not None else {x for t in R for x in t})
    projections = [project_relation(R, iv) if R else set() for iv in division]
    for b in itertools.product(dom, repeat=r):
        inside = all(b[: i - 1] + b[j:] in P for (i, j), P in zip(division, projections))
        if inside != (b in R):
            return False
    return True
