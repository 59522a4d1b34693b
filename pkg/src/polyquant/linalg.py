"""Matrices over Z_m, the separating-vector lemmas over Z_3, and Tseitin systems over Z_3/Z_4."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .graphs import BaseGraph, lex_shortest_path


@dataclass(frozen=True)
class MatrixModM:
    m: int
    rows: int
    cols: int
    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.m not in (2, 3, 4):
            raise ValueError(f"unsupported modulus {self.m}")
        if len(self.entries) != self.rows * self.cols:
            raise ValueError("entry count does not match the shape")
        if any(not 0 <= x < self.m for x in self.entries):
            raise ValueError("entry out of range")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], m: int = 3) -> "MatrixModM":
        rows = [list(r) for r in rows]
        return cls(m, len(rows), len(rows[0]) if rows else 0, tuple(x % m for r in rows for x in r))

    def row(self, i: int) -> tuple[int, ...]:
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def column(self, j: int) -> tuple[int, ...]:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def as_rows(self) -> list[tuple[int, ...]]:
        return [self.row(i) for i in range(self.rows)]

    def __matmul__(self, u: Sequence[int]) -> tuple[int, ...]:
        return tuple(sum(a * b for a, b in zip(self.row(i), u)) % self.m for i in range(self.rows))

    def encode(self) -> str:
        return encode_rows(self.as_rows())


def encode_rows(rows: Iterable[Sequence[int]]) -> str:
    return "/".join("".join(str(int(x)) for x in r) for r in rows)


def has_nu_property(M: MatrixModM) -> bool:
    for j in range(M.cols):
        col = M.column(j)
        if max(col.count(x) for x in set(col)) < M.rows - 1:
            return False
    return True


def nu_image(M: MatrixModM) -> tuple[int, ...] | None:
    out = []
    for j in range(M.cols):
        col = M.column(j)
        best = max(set(col), key=col.count)
        if col.count(best) < M.rows - 1:
            return None
        out.append(best)
    return tuple(out)


# -- separator sets -------------------------------------------------------


@dataclass(frozen=True)
class SeparatorSet:
    ell: int
    width: int
    q: int
    p: int
    blocks: tuple[tuple[int, ...], ...]  # 0-based column indices
    vectors: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.vectors)

    @staticmethod
    def formula(ell: int, width: int) -> int:
        q, p = divmod(width, ell - 1)
        return (ell - 1) * q * (q - 1) + 2 * p * q


def build_separator_set(ell: int, width: int) -> SeparatorSet:
    if ell < 3:
        raise ValueError("ell must be at least 3")
    if width < ell:
        raise ValueError(f"width {width} is smaller than ell={ell}")
    q, p = divmod(width, ell - 1)
    blocks, start = [], 0
    for i in range(ell - 1):
        size = q + 1 if i < p else q
        blocks.append(tuple(range(start, start + size)))
        start += size
    vectors = []
    for block in blocks:
        for j1, j2 in itertools.combinations(block, 2):
            for second in (1, 2):
                u = [0] * width
                u[j1], u[j2] = 1, second
                vectors.append(tuple(u))
    return SeparatorSet(ell, width, q, p, tuple(blocks), tuple(vectors))


# -- exhaustive sweeps ----------------------------------------------------


def nu_alphabet(ell: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All columns in Z_3^ell with the NU property: values, majority, minority row (-1 if constant)."""
    cols, maj, minrow = [], [], []
    for c in range(3):
        cols.append([c] * ell)
        maj.append(c)
        minrow.append(-1)
    for i in range(ell):
        for a in range(3):
            for b in range(3):
                if a != b:
                    col = [a] * ell
                    col[i] = b
                    cols.append(col)
                    maj.append(a)
                    minrow.append(i)
    return np.array(cols, dtype=np.int8), np.array(maj, dtype=np.int8), np.array(minrow, dtype=np.int8)


def _digits(start: int, stop: int, base: int, width: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((len(idx), width), dtype=np.int64)
    for j in range(width - 1, -1, -1):
        idx, out[:, j] = np.divmod(idx, base)
    return out


@dataclass
class NUBatch:
    """A batch of NU-property matrices with the quantities every sweep needs."""

    M: np.ndarray  # (N, ell, width)
    image: np.ndarray  # (N, width) column majorities
    minrow: np.ndarray  # (N, width)

    @property
    def ell(self) -> int:
        return self.M.shape[1]

    def equal_row_sums(self) -> np.ndarray:
        s = self.M.sum(axis=2) % 3
        return (s == s[:, :1]).all(axis=1)

    def image_is_row(self) -> np.ndarray:
        # the image is row i exactly when no column has its minority entry in row i
        return np.stack([~(self.minrow == i).any(axis=1) for i in range(self.ell)], axis=1).any(axis=1)

    def distinguished_rows(self) -> np.ndarray:
        return np.stack([(self.minrow == i).any(axis=1) for i in range(self.ell)], axis=1).sum(axis=1)

    def two_rows_equal(self) -> np.ndarray:
        out = np.zeros(len(self.M), dtype=bool)
        for i, k in itertools.combinations(range(self.ell), 2):
            out |= (self.M[:, i, :] == self.M[:, k, :]).all(axis=1)
        return out

    def product(self, u: Sequence[int]) -> np.ndarray:
        return (self.M.astype(np.int64) @ np.asarray(u, dtype=np.int64)) % 3

    def encode(self, i: int) -> str:
        return encode_rows(self.M[i])


def three_valued(v: np.ndarray) -> np.ndarray:
    return np.stack([(v == x).any(axis=1) for x in range(3)], axis=1).all(axis=1)


def nu_matrices(ell: int, width: int, chunk: int = 1 << 19) -> Iterator[NUBatch]:
    alph, maj, minrow = nu_alphabet(ell)
    K = len(alph)
    total = K**width
    for start in range(0, total, chunk):
        idx = _digits(start, min(total, start + chunk), K, width)
        M = alph[idx].transpose(0, 2, 1)
        yield NUBatch(M, maj[idx], minrow[idx])


def nu_matrix_count(ell: int, width: int) -> int:
    return (3 + 6 * ell) ** width


def _report(name: str, checked: int, hyp: int, violations: list[str], internal: list[str], **extra) -> dict:
    return {
        "lemma": name,
        "checked": int(checked),
        "hypotheses_met": int(hyp),
        "violations": sorted(violations),
        "internal_check_violations": sorted(internal),
        **extra,
    }


def verify_lemma_base() -> dict:
    idx = _digits(0, 3**9, 3, 9).reshape(-1, 3, 3)
    cols = idx.transpose(0, 2, 1)  # (N, col, row)
    nu = ~((cols[:, :, 0] != cols[:, :, 1]) & (cols[:, :, 1] != cols[:, :, 2]) & (cols[:, :, 0] != cols[:, :, 2])).any(axis=1)
    s = idx.sum(axis=2) % 3
    sums = (s == s[:, :1]).all(axis=1)
    # majority per column (defined where the NU property holds)
    image = np.where(cols[:, :, 0] == cols[:, :, 1], cols[:, :, 0], cols[:, :, 2])
    is_row = np.stack([(idx[:, i, :] == image).all(axis=1) for i in range(3)], axis=1).any(axis=1)
    hyp = nu & sums & ~is_row
    prod = (idx @ np.array([0, 1, 2])) % 3
    ok = three_valued(prod)
    bad = np.nonzero(hyp & ~ok)[0]
    return _report("base-separating", len(idx), hyp.sum(), [encode_rows(idx[i]) for i in bad], [])


def _check_ell(ell: int) -> None:
    if ell not in (3, 4):
        raise ValueError(f"ell={ell} is outside the supported range (3, 4)")


def verify_lemma_separating(ell: int) -> dict:
    _check_ell(ell)
    u = [0, 1, 2] + [0] * (ell - 3)
    checked = hyp_total = 0
    violations, internal = [], []
    for b in nu_matrices(ell, ell):
        checked += len(b.M)
        not_row = ~b.image_is_row()
        hyp = b.equal_row_sums() & not_row
        hyp_total += hyp.sum()
        ok = three_valued(b.product(u))
        violations += [b.encode(i) for i in np.nonzero(hyp & ~ok)[0]]
        internal += [b.encode(i) for i in np.nonzero(not_row & (b.distinguished_rows() < ell))[0]]
    return _report(f"separating:{ell}", checked, hyp_total, violations, internal)


def verify_lemma_row_back(ell: int) -> dict:
    _check_ell(ell)
    checked = hyp_total = 0
    violations = []
    for b in nu_matrices(ell, ell):
        checked += len(b.M)
        hyp = b.equal_row_sums()
        hyp_total += hyp.sum()
        bad = hyp & (b.image_is_row() != b.two_rows_equal())
        violations += [b.encode(i) for i in np.nonzero(bad)[0]]
    return _report(f"row-back:{ell}", checked, hyp_total, violations, [])


PAIR_SIZES = {(3, 3), (3, 4), (3, 5), (4, 4)}


def verify_lemma_pairs(ell: int, width: int) -> dict:
    if (ell, width) not in PAIR_SIZES:
        raise ValueError(f"unsupported size {(ell, width)}; choose from {sorted(PAIR_SIZES)}")
    U = build_separator_set(ell, width)
    checked = 0
    violations, internal = [], []
    case1 = case2 = 0
    for b in nu_matrices(ell, width):
        checked += len(b.M)
        is_row = b.image_is_row()
        some_three = np.zeros(len(b.M), dtype=bool)
        all_follow = np.ones(len(b.M), dtype=bool)
        for u in U.vectors:
            v = b.product(u)
            some_three |= three_valued(v)
            target = (b.image.astype(np.int64) @ np.asarray(u)) % 3
            all_follow &= (v == target[:, None]).sum(axis=1) >= ell - 1
        bad = np.where(is_row, ~(some_three | all_follow), ~some_three)
        case1 += (~is_row).sum()
        case2 += is_row.sum()
        violations += [b.encode(i) for i in np.nonzero(bad)[0]]
        internal += [b.encode(i) for i in np.nonzero(~is_row & (b.distinguished_rows() < ell))[0]]
    return _report(
        f"pairs:{ell},{width}", checked, checked, violations, internal,
        separator_size=U.size, image_not_row=int(case1), image_is_row=int(case2),
    )


# -- linear systems -------------------------------------------------------


@dataclass(frozen=True)
class LinearSystem:
    modulus: int
    variables: tuple[int, ...]
    equations: tuple[tuple[tuple[tuple[int, int], ...], int], ...]  # ((var, coef), ...), rhs

    def __post_init__(self) -> None:
        vs = set(self.variables)
        for coeffs, rhs in self.equations:
            for v, _ in coeffs:
                if v not in vs:
                    raise ValueError(f"undeclared variable {v}")

    def residuals(self, x: Mapping[int, int]) -> list[int]:
        """Left-hand side minus right-hand side, per equation."""
        m = self.modulus
        return [(sum(c * x[v] for v, c in coeffs) - rhs) % m for coeffs, rhs in self.equations]

    def satisfied_by(self, x: Mapping[int, int]) -> bool:
        return not any(self.residuals(x))

    def matrix(self) -> tuple[list[list[int]], list[int]]:
        col = {v: i for i, v in enumerate(self.variables)}
        A, b = [], []
        for coeffs, rhs in self.equations:
            row = [0] * len(self.variables)
            for v, c in coeffs:
                row[col[v]] = (row[col[v]] + c) % self.modulus
            A.append(row)
            b.append(rhs % self.modulus)
        return A, b


def tseitin_system(graph: BaseGraph, charges: Mapping[int, int], m: int) -> LinearSystem:
    eqs = []
    for v in graph.vertices:
        c = charges.get(v, 0)
        if not 0 <= c < m:
            raise ValueError(f"charge {c} at vertex {v} outside [0, {m})")
        eqs.append((tuple((e, 1) for e in graph.inc[v]), c))
    return LinearSystem(m, tuple(range(graph.E)), tuple(eqs))


def _eliminate(A: list[list[int]], b: list[int], p: int) -> tuple[list[int], list[list[int]]] | None:
    """Particular solution and kernel basis of A x = b over the prime field Z_p."""
    rows = [list(r) + [rhs % p] for r, rhs in zip(A, b)]
    n = len(A[0]) if A else 0
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] % p), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = pow(rows[r][c], -1, p)
        rows[r] = [x * inv % p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [(x - f * y) % p for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    if any(row[n] for row in rows[r:]):
        return None
    x = [0] * n
    for i, c in enumerate(pivots):
        x[c] = rows[i][n]
    free = [c for c in range(n) if c not in set(pivots)]
    kernel = []
    for f in free:
        k = [0] * n
        k[f] = 1
        for i, c in enumerate(pivots):
            k[c] = (-rows[i][f]) % p
        kernel.append(k)
    return x, kernel


def _eliminate_z4(A: list[list[int]], b: list[int]) -> list[int] | None:
    """One solution of A x = b over Z_4, by full pivoting on the 2-adic valuation."""
    rows = [[a % 4 for a in r] + [rhs % 4] for r, rhs in zip(A, b)]
    n = len(A[0]) if A else 0
    cols = list(range(n))
    steps = []  # (row, column, valuation)
    r = 0
    while r < len(rows):
        best = None
        for i in range(r, len(rows)):
            for j in cols:
                a = rows[i][j]
                if a:
                    val = 0 if a % 2 else 1
                    if best is None or val < best[0]:
                        best = (val, i, j)
                        if val == 0:
                            break
            if best and best[0] == 0:
                break
        if best is None:
            break
        val, i, c = best
        rows[r], rows[i] = rows[i], rows[r]
        if val == 0 and rows[r][c] != 1:
            rows[r] = [x * 3 % 4 for x in rows[r]]
        # every other entry of the column is a multiple of the pivot
        piv = rows[r][c]
        for i in range(len(rows)):
            if i != r and rows[i][c]:
                f = rows[i][c] // piv
                rows[i] = [(x - f * y) % 4 for x, y in zip(rows[i], rows[r])]
        steps.append((r, c, val))
        cols.remove(c)
        r += 1
    if any(row[n] for row in rows[r:]):
        return None
    x = [0] * n
    for i, c, val in reversed(steps):
        rest = (rows[i][n] - sum(rows[i][j] * x[j] for j in range(n) if j != c)) % 4
        if val == 0:
            x[c] = rest
        elif rest % 2:
            return None
        else:
            x[c] = rest // 2
    return x


def solve(system: LinearSystem) -> dict[int, int] | None:
    m = system.modulus
    if m not in (2, 3, 4):
        raise ValueError(f"unsupported modulus {m}")
    A, b = system.matrix()
    if not A:
        return {v: 0 for v in system.variables}
    if m in (2, 3):
        res = _eliminate(A, b, m)
        return None if res is None else dict(zip(system.variables, res[0]))
    x = _eliminate_z4(A, b)
    return None if x is None else dict(zip(system.variables, x))


def perfect_matching(graph: BaseGraph) -> list[int]:
    import networkx as nx
    from networkx.algorithms import bipartite

    G = nx.Graph()
    G.add_nodes_from(graph.vertices)
    G.add_edges_from(graph.edges)
    if graph.side is not None:
        top = [v for v in graph.vertices if graph.side[v] == 0]
    else:
        if not nx.is_bipartite(G):
            raise ValueError("graph is not bipartite")
        top = list(bipartite.sets(G)[0])
    match = bipartite.hopcroft_karp_matching(G, top_nodes=top)
    eid = {p: e for e, p in enumerate(graph.edges)}
    out = sorted({eid[tuple(sorted((u, w)))] for u, w in match.items()})
    if 2 * len(out) != graph.V:
        raise ValueError("no perfect matching exists")
    return out


def split_charges(graph: BaseGraph, charges: Mapping[int, int]) -> tuple[int, int | None]:
    """The common charge a and the single exceptional vertex (None if all charges agree)."""
    vals = [charges.get(v, 0) for v in graph.vertices]
    common = max(set(vals), key=vals.count)
    odd = [v for v in graph.vertices if vals[v] != common]
    if len(odd) > 1:
        raise ValueError("charges differ from the common value at more than one vertex")
    return common, (odd[0] if odd else None)


def near_solution(graph: BaseGraph, charges: Mapping[int, int], m: int, v_prime: int) -> list[int]:
    """Edge values satisfying every Tseitin equation except possibly the one at v_prime."""
    if graph.side is None:
        raise ValueError("graph must be bipartite")
    a, tilde = split_charges(graph, charges)
    if tilde is None:
        tilde = 0
    lam = [0] * graph.E
    if a:
        for e in perfect_matching(graph):
            lam[e] = (lam[e] + a) % m
    c = (charges.get(tilde, 0) - a) % m
    path = lex_shortest_path(graph, tilde, v_prime)
    sign = 1
    for e in path:
        lam[e] = (lam[e] + sign * c) % m
        sign = -sign
    return lam


def defect_at(graph: BaseGraph, charges: Mapping[int, int], m: int, lam: Sequence[int], v: int) -> int:
    return (sum(lam[e] for e in graph.inc[v]) - charges.get(v, 0)) % m
