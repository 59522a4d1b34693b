"""Duplicator's strategy in the Maltsev game on the Z_4 instances."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from ..cfi import CFIStructure, EdgeBijection, classify_permutation_z4, gadget_classes, path_shifts, z4_images
from ..graphs import lex_shortest_path
from ..linalg import near_solution
from ..partial_poly import close_tuple_set_maltsev
from .core import (
    UNSET,
    BudgetExceeded,
    GameConfig,
    NoSafeEscape,
    PartialIsoChecker,
    Position,
    Report,
    assign,
    element_tuples,
    move_count,
    variable_tuples,
)

SIDES = ("right", "left")  # right: Spoiler picks in the left structure; left: in the right structure


@dataclass(frozen=True, eq=False)
class MaltsevMemory:
    """f is a uniform rotation (x + c_e) or reflection (c_e - x) on every edge; w is the bar vertex."""

    S: CFIStructure
    mode: str
    shifts: np.ndarray
    w: int

    def __post_init__(self) -> None:
        if self.mode not in ("rotation", "reflection"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @cached_property
    def f(self) -> EdgeBijection:
        return EdgeBijection(self.S, z4_images(self.S, self.mode, self.shifts))

    @cached_property
    def f_inv(self) -> EdgeBijection:
        return self.f.inverse()

    def key(self) -> tuple:
        return (self.mode, self.w, self.shifts.tobytes())

    def to_json(self) -> dict:
        return {"w": self.S.graph.labels[self.w], "mode": self.mode, "shifts": self.shifts.tolist()}


def initial_memory_maltsev(S: CFIStructure, T: CFIStructure) -> MaltsevMemory:
    odd = [v for v in S.graph.vertices if S.charge(v) != T.charge(v)]
    if len(odd) != 1:
        raise ValueError("instances must differ in charge at exactly one vertex")
    return MaltsevMemory(S, "rotation", np.zeros(S.graph.E, dtype=np.int64), odd[0])


def maltsev_validate_duplicator(image: Sequence[int], P) -> bool:
    P = {tuple(p) for p in P}
    if len(P) > 3:
        raise ValueError("Duplicator may offer at most three tuples")
    return tuple(image) in close_tuple_set_maltsev(P)


def _to_frame(mode: str, shifts: np.ndarray, side: str) -> np.ndarray:
    """Shifts of f, or of its inverse for moves in the right structure; the map is an involution."""
    if side == "left" and mode == "rotation":
        return (-shifts) % 4
    return shifts % 4


class MaltsevStrategy:
    def __init__(self, S: CFIStructure, T: CFIStructure):
        if S.variant.kind != "maltsev" or T.variant != S.variant or S.graph != T.graph:
            raise ValueError("expected two Z_4 instances over the same graph")
        self.S, self.T, self.g = S, T, S.graph
        self.twist = [2 * (T.charge(v) - S.charge(v)) % 4 for v in self.g.vertices]
        self._escape: dict = {}
        self._near: dict = {}
        self._paths: dict = {}

    def target(self, mode: str, v: int) -> int:
        """Shift sum at v making f a local isomorphism (same in both directions)."""
        return (self.twist[v] + (1 if mode == "reflection" else 0)) % 4

    def shift_sum(self, shifts: np.ndarray, v: int) -> int:
        return int(sum(int(shifts[e]) for e in self.g.inc[v])) % 4

    # -- case 1: a free edge remains at w -----------------------------------

    def escape(self, w: int, F: frozenset) -> tuple[int, tuple[int, ...]]:
        key = (w, F)
        if key not in self._escape:
            g = self.g
            found = None
            for v in g.vertices:
                if v == w or any(e in F for e in g.inc[v]):
                    continue
                path = lex_shortest_path(g, w, v, edge_ok=lambda e: e not in F)
                if path is not None:
                    found = (v, tuple(path))
                    break
            if found is None:
                raise NoSafeEscape(f"no escape vertex from {w} avoiding edges {sorted(F)}")
            self._escape[key] = found
        return self._escape[key]

    def case1(self, mem: MaltsevMemory, F: frozenset) -> MaltsevMemory:
        w2, path = self.escape(mem.w, F)
        # the correction 2 is its own negative, so it is the same in f and in its inverse
        shifts = (mem.shifts + np.array(path_shifts(self.g, mem.w, path, 2, 4))) % 4
        return MaltsevMemory(self.S, mem.mode, shifts, w2)

    # -- case 2: all of E(w) pebbled ----------------------------------------

    def far_vertex(self, w: int) -> int:
        nb = set(self.g.neighbors(w))
        return next(v for v in self.g.vertices if v != w and v not in nb)

    def path_avoiding(self, src: int, dst: int, w: int, used: frozenset = frozenset()) -> tuple[int, ...]:
        key = (src, dst, w, used)
        if key not in self._paths:
            g = self.g
            inner = {x for e in used for x in g.edges[e]} - {dst}
            found = lex_shortest_path(g, src, dst, vertex_ok=lambda v: v != w and v not in inner, edge_ok=lambda e: e not in used)
            if found is None and used:
                found = lex_shortest_path(g, src, dst, vertex_ok=lambda v: v != w)
            if found is None:
                raise NoSafeEscape(f"no path from {src} to {dst} avoiding {w}")
            self._paths[key] = tuple(found)
        return self._paths[key]

    def near(self, mode: str, w2: int) -> np.ndarray:
        key = (mode, w2)
        if key not in self._near:
            charges = {v: self.target(mode, v) for v in self.g.vertices}
            self._near[key] = np.array(near_solution(self.g, charges, 4, w2), dtype=np.int64)
        return self._near[key]

    def move(
        self, mem: MaltsevMemory, pos: Position, side: str, ys: Sequence[int], atoms: Sequence[int]
    ) -> tuple[list[tuple[int, ...]], list[MaltsevMemory]]:
        """Duplicator's tuple set P and, for each pick from P, the new memory."""
        if side not in SIDES:
            raise ValueError(f"unknown side {side!r}")
        g = self.g
        h_shifts = _to_frame(mem.mode, mem.shifts, side)
        h = z4_images(self.S, mem.mode, h_shifts)
        src = list(pos.alpha if side == "right" else pos.beta)
        for y, a in zip(ys, atoms):
            src[y] = int(a)
        F = frozenset(a // 4 for a in src if a is not None)
        image = tuple(int(h[a]) for a in atoms)
        w = mem.w
        if not set(g.inc[w]) <= F:
            return [image], [self.case1(mem, F)]
        if len(atoms) != len(g.inc[w]) or {a // 4 for a in atoms} != set(g.inc[w]):
            raise ValueError("invariant violated: E(w) was pebbled before this round")
        theta = sum(b % 4 for b in image) % 4
        delta = 1 if theta % 2 else 3
        edges = [a // 4 for a in atoms]

        def bump(comps):
            return tuple(
                e * 4 + (b % 4 + (delta if i in comps else 0)) % 4 for i, (e, b) in enumerate(zip(edges, image))
            )

        P = [bump({0}), bump({0, 1}), bump({1})]
        w2 = self.far_vertex(w)
        xs = [g.other(e, w) for e in edges]
        # both first entries bumped: carry the two shifts off along two escape paths
        p1 = self.path_avoiding(xs[0], w2, w)
        p2 = self.path_avoiding(xs[1], w2, w, frozenset(p1))
        both = h_shifts.copy()
        for e, p in ((edges[0], p1), (edges[1], p2)):
            both = (both + np.array(path_shifts(g, w, (e,) + p, delta, 4))) % 4
        mems = [None, MaltsevMemory(self.S, mem.mode, _to_frame(mem.mode, both, side), w2), None]
        # one entry bumped: invert the mode, pinning E(w) so that f'(a) = b
        new_mode = "reflection" if mem.mode == "rotation" else "rotation"
        for pick, bumped in ((0, 0), (2, 1)):
            pinned = []
            for i, (a, e) in enumerate(zip(atoms, edges)):
                hi = [h[e * 4 + x] % 4 for x in range(4)]
                new = [(-hi[x] + 2 * hi[a % 4] + (delta if i == bumped else 0)) % 4 for x in range(4)]
                kind, c = classify_permutation_z4(new)
                if kind != new_mode:
                    raise AssertionError("mode inversion produced the wrong permutation type")
                pinned.append(c)
            lam = self.near(new_mode, w2).copy()
            diff = [(c - int(lam[e])) % 4 for c, e in zip(pinned, edges)]
            for e, c in zip(edges, pinned):
                lam[e] = c
            carry = 0
            for i in range(len(edges) - 1):
                carry = (carry + diff[i]) % 4
                if carry:
                    p = self.path_avoiding(xs[i], xs[i + 1], w)
                    lam = (lam + np.array(path_shifts(g, xs[i], p, -carry, 4))) % 4
            mems[pick] = MaltsevMemory(self.S, new_mode, _to_frame(new_mode, lam, side), w2)
        return P, mems


def duplicator_move_maltsev(
    mem: MaltsevMemory, pos: Position, side: str, r: int, ys: Sequence[int], atoms: Sequence[int],
    strategy: MaltsevStrategy,
) -> tuple[list[tuple[int, ...]], list[MaltsevMemory]]:
    """P and the new memory for each pick from P."""
    if len(ys) > r:
        raise ValueError(f"at most {r} pebbles may move per round")
    return strategy.move(mem, pos, side, ys, atoms)


# -- invariant ------------------------------------------------------------


def edge_modes(f: EdgeBijection) -> tuple[str, np.ndarray] | None:
    """The common mode of f on all edges and its constants, or None if f is not uniform."""
    kinds = [f.classify_edge(e) for e in range(f.S.graph.E)]
    modes = {k for k, _ in kinds}
    if len(modes) != 1 or "other" in modes:
        return None
    return modes.pop(), np.array([c for _, c in kinds], dtype=np.int64)


def good_bar_maltsev(f: EdgeBijection, T: CFIStructure, w: int) -> bool:
    S = f.S
    if not f.is_edge_preserving():
        return False
    um = edge_modes(f)
    if um is None:
        return False
    mode, c = um
    cls = gadget_classes(f, T)
    if any(cls[v] != "preserves" for v in S.graph.vertices if v != w):
        return False
    twist = 2 * (T.charge(w) - S.charge(w)) % 4
    need = (twist + (1 if mode == "reflection" else 0)) % 4
    total = int(sum(int(c[e]) for e in S.graph.inc[w])) % 4
    return (total - need) % 4 == 2


def check_invariant_maltsev(S: CFIStructure, T: CFIStructure, pos: Position, mem: MaltsevMemory) -> bool:
    if S.variant.kind != "maltsev" or T.variant != S.variant:
        return False
    f = mem.f
    pebbled = {a // 4 for a in pos.alpha if a is not None}
    if pebbled & set(S.graph.inc[mem.w]):
        return False
    if any(a is not None and f(a) != b for a, b in zip(pos.alpha, pos.beta)):
        return False
    return good_bar_maltsev(f, T, mem.w)


# -- one-round verification -------------------------------------------------


@dataclass
class Children:
    """Positions reached after one round, grouped by Duplicator's new memory."""

    memories: list
    alpha: np.ndarray
    beta: np.ndarray
    mem_id: np.ndarray


class MaltsevVerifier:
    def __init__(self, S: CFIStructure, T: CFIStructure, config: GameConfig | None = None, strategy: MaltsevStrategy | None = None):
        self.config = config or GameConfig("maltsev", 3)
        if self.config.kind != "maltsev":
            raise ValueError("expected a Maltsev-game configuration")
        self.S, self.T = S, T
        self.strategy = strategy or MaltsevStrategy(S, T)
        self.checker = PartialIsoChecker(S.structure, T.structure, self.config.k)
        self._good: dict[tuple, bool] = {}

    def good(self, mem: MaltsevMemory) -> bool:
        key = mem.key()
        if key not in self._good:
            self._good[key] = good_bar_maltsev(mem.f, self.T, mem.w)
        return self._good[key]

    def sweep(
        self,
        alpha0: np.ndarray,
        beta0: np.ndarray,
        mem: MaltsevMemory,
        collect: bool = False,
    ) -> tuple[Report, Children | None]:
        """Every Spoiler move from every given position (rows of alpha0/beta0), all picks from P."""
        S, cfg, st = self.S, self.config, self.strategy
        k, n = cfg.k, S.n_atoms
        alpha0 = np.atleast_2d(alpha0)
        beta0 = np.atleast_2d(beta0)
        rep = Report("maltsev-one-round")
        rep.extra["max_P"] = 0
        rep.extra["outcomes"] = 0  # (move, pick) pairs checked
        mems: list[MaltsevMemory] = []
        ids: dict[tuple, int] = {}
        out_a, out_b, out_m = [], [], []
        inc_w = list(S.graph.inc[mem.w])
        f_img, f_inv = mem.f.images, mem.f_inv.images

        def mem_index(m: MaltsevMemory) -> int:
            key = m.key()
            if key not in ids:
                ids[key] = len(mems)
                mems.append(m)
            return ids[key]

        answers: dict = {}
        cache: list = []
        tables: list = [None, None, None]

        def check(alpha, beta, mid, where):
            """Verdicts for new positions paired with their new memories."""
            wins = ~self.checker.batch(alpha, beta)
            if len(cache) != len(mems):
                cache[:] = mems
                tables[:] = [
                    np.stack([m.f.images for m in mems]),
                    np.array([self.good(m) for m in mems]),
                    np.array([S.graph.inc[m.w] for m in mems]),
                ]
            table, good, incw_m = tables
            img = table[mid[:, None], np.where(alpha == UNSET, 0, alpha)]
            consistent = np.all((alpha == UNSET) | (img == beta), axis=1)
            edges = np.where(alpha == UNSET, -1, alpha // 4)
            incw = incw_m[mid]  # (N, d)
            touched = np.zeros(len(alpha), dtype=bool)
            for c in range(edges.shape[1]):
                touched |= np.any(incw == edges[:, c : c + 1], axis=1)
            ok = ~wins & consistent & good[mid] & ~touched
            for i in np.flatnonzero(~ok)[: Report.MAX_EXAMPLES]:
                why = "spoiler wins" if wins[i] else "f'(alpha') != beta'" if not consistent[i] else (
                    "not good bar w'" if not good[mid[i]] else "E(w') pebbled"
                )
                rep.note(f"{where}: alpha' {alpha[i].tolist()} beta' {beta[i].tolist()}: {why}")
            rep.violations += int((~ok).sum())
            rep.extra["outcomes"] += len(alpha)
            if collect:
                out_a.append(alpha)
                out_b.append(beta)
                out_m.append(mid)

        for side in SIDES:
            src0, dst0 = (alpha0, beta0) if side == "right" else (beta0, alpha0)
            h = f_img if side == "right" else f_inv
            for ys in variable_tuples(k, cfg.r):
                kept = [i for i in range(k) if i not in ys]
                # rows differing only in overwritten variables behave identically
                ks = np.unique(np.concatenate([src0[:, kept], dst0[:, kept]], axis=1), axis=0)
                A = element_tuples(n, len(ys))
                src_k = np.full((len(ks), k), UNSET, dtype=np.int64)
                dst_k = np.full((len(ks), k), UNSET, dtype=np.int64)
                src_k[:, kept] = ks[:, : len(kept)]
                dst_k[:, kept] = ks[:, len(kept) :]
                src = np.repeat(src_k, len(A), axis=0)
                dst = np.repeat(dst_k, len(A), axis=0)
                At = np.tile(A, (len(ks), 1))
                src[:, list(ys)] = At
                rep.total_moves += len(src)
                rep.checked += len(src)
                edges = np.where(src == UNSET, -1, src // 4)
                full = np.ones(len(src), dtype=bool)
                for e in inc_w:
                    full &= np.any(edges == e, axis=1)
                # case 1: P = {h(a)}, picked necessarily
                c1 = ~full
                s1, d1, a1 = src[c1], dst[c1].copy(), At[c1]
                d1[:, list(ys)] = h[a1]
                rep.extra["max_P"] = max(rep.extra["max_P"], 1)
                fkey = np.sort(np.where(s1 == UNSET, -1, s1 // 4), axis=1)
                code = np.zeros(len(s1), dtype=np.int64)
                for c in range(k):
                    code = code * (S.graph.E + 1) + fkey[:, c] + 1
                uniq, first, inv = np.unique(code, return_index=True, return_inverse=True)
                resp = np.empty(len(uniq), dtype=np.int64)
                failed = np.zeros(len(uniq), dtype=bool)
                for i, r0 in enumerate(first):
                    F = frozenset(int(e) for e in fkey[r0] if e >= 0)
                    try:
                        resp[i] = mem_index(st.case1(mem, F))
                    except NoSafeEscape as exc:
                        failed[i] = True
                        resp[i] = 0
                        rep.note(f"{side} {ys}: {exc}")
                rep.violations += int(failed[inv].sum())
                keep = ~failed[inv]
                al1, be1 = (s1, d1) if side == "right" else (d1, s1)
                if mems and keep.any():
                    check(al1[keep], be1[keep], resp[inv][keep], f"{side} {ys}")
                # case 2: every edge at w pebbled, Duplicator uses the Maltsev move
                pend: list = []
                pend_m: list = []
                for i in np.flatnonzero(full):
                    src_pos = [None if x == UNSET else int(x) for x in src[i]]
                    dst_pos = [None if x == UNSET else int(x) for x in dst[i]]
                    row = i // len(A)
                    sk, dk = (tuple(None if x == UNSET else int(x) for x in t[row]) for t in (src_k, dst_k))
                    pos = Position(sk, dk) if side == "right" else Position(dk, sk)
                    atoms = [int(x) for x in At[i]]
                    image = [int(h[a]) for a in atoms]
                    # with every edge at w pebbled by this move, the answer ignores ys and older pebbles
                    key = (side, tuple(atoms))
                    if key not in answers:
                        try:
                            P, new_mems = st.move(mem, pos, side, ys, atoms)
                            answers[key] = (P, new_mems, len(P) <= 3 and maltsev_validate_duplicator(image, P), None)
                        except NoSafeEscape as exc:
                            answers[key] = (None, None, False, str(exc))
                    P, new_mems, valid, err = answers[key]
                    if err is not None:
                        rep.flag(f"{side} {ys} {atoms}: {err}")
                        continue
                    rep.extra["max_P"] = max(rep.extra["max_P"], len(P))
                    if not valid:
                        rep.flag(f"{side} {ys} {atoms}: P {P} does not generate the image {image}")
                        continue
                    rows_s, rows_d, mids = [], [], []
                    for b, m in zip(P, new_mems):
                        dpos = list(dst_pos)
                        for y, x in zip(ys, b):
                            dpos[y] = x
                        rows_s.append([UNSET if x is None else x for x in src_pos])
                        rows_d.append([UNSET if x is None else x for x in dpos])
                        mids.append(mem_index(m))
                    rs, rd = np.array(rows_s), np.array(rows_d)
                    pend.append((rs, rd) if side == "right" else (rd, rs))
                    pend_m.extend(mids)
                if pend:
                    check(
                        np.concatenate([a for a, _ in pend]),
                        np.concatenate([b for _, b in pend]),
                        np.array(pend_m),
                        f"{side} {ys} all edges at w",
                    )
        children = None
        if collect and out_a:
            children = Children(mems, np.concatenate(out_a), np.concatenate(out_b), np.concatenate(out_m))
        rep.extra["memories"] = len(mems)
        return rep, children

    def verify(self, pos: Position, mem: MaltsevMemory) -> Report:
        al, be = pos.arrays()
        rep, _ = self.sweep(al, be, mem)
        rep.extra["precondition"] = check_invariant_maltsev(self.S, self.T, pos, mem)
        return rep


def verify_one_round_maltsev(
    S: CFIStructure,
    T: CFIStructure,
    pos: Position,
    mem: MaltsevMemory,
    budget: int = 5_000_000,
    seed: int = 0,
    verifier: MaltsevVerifier | None = None,
) -> Report:
    """Exhaustive when the move count fits the budget (always the case on the small graphs used here)."""
    verifier = verifier or MaltsevVerifier(S, T)
    total = 2 * move_count(verifier.config.k, verifier.config.r, S.n_atoms)
    if total > budget:
        raise BudgetExceeded(f"{total} moves exceed the budget {budget}; the Maltsev sweep is exhaustive only")
    return verifier.verify(pos, mem)


def explore_maltsev(
    S: CFIStructure,
    T: CFIStructure,
    depth: int,
    verifier: MaltsevVerifier | None = None,
) -> Report:
    """Exhaustive Spoiler game tree to the given depth from the initial state.

    Positions are merged per Duplicator memory; rows that differ only in the
    variables Spoiler overwrites are merged per variable tuple.
    """
    verifier = verifier or MaltsevVerifier(S, T)
    k = verifier.config.k
    total = Report("maltsev-explore", exhaustive=True)
    total.extra["depth"] = depth
    total.extra["outcomes"] = 0
    total.extra["positions"] = [1]
    groups = [(initial_memory_maltsev(S, T), np.full((1, k), UNSET), np.full((1, k), UNSET))]
    raw = 0
    for level in range(depth):
        last = level == depth - 1
        raw += sum(len(al) for _, al, _ in groups) * 2 * move_count(k, verifier.config.r, S.n_atoms)
        nxt: dict[tuple, tuple] = {}
        count = 0
        for mem, al, be in groups:
            rep, ch = verifier.sweep(al, be, mem, collect=not last)
            total.add(rep)
            total.extra["outcomes"] += rep.extra["outcomes"]
            if ch is None:
                continue
            for i, m in enumerate(ch.memories):
                sel = ch.mem_id == i
                rows = np.unique(np.concatenate([ch.alpha[sel], ch.beta[sel]], axis=1), axis=0)
                key = m.key()
                if key in nxt:
                    rows = np.unique(np.concatenate([nxt[key][1], rows]), axis=0)
                nxt[key] = (m, rows)
        if not last:
            groups = [(m, rows[:, :k], rows[:, k:]) for m, rows in nxt.values()]
            count = sum(len(r) for _, r in nxt.values())
            total.extra["positions"].append(count)
            total.extra.setdefault("memories", []).append(len(groups))
    total.extra["moves_before_merging"] = raw
    return total


def targeted_move_maltsev(S: CFIStructure, mem: MaltsevMemory, cfg: GameConfig, rng: np.random.Generator):
    """(side, ys, atoms): biased towards pebbling all edges at the bar vertex."""
    side = SIDES[int(rng.integers(2))]
    g = S.graph
    if rng.random() < 0.3:
        ys = tuple(int(y) for y in rng.permutation(cfg.k)[: len(g.inc[mem.w])])
        edges = [int(e) for e in rng.permutation(list(g.inc[mem.w]))]
        atoms = [e * 4 + int(rng.integers(4)) for e in edges[: len(ys)]]
        return side, ys, atoms
    s = int(rng.integers(1, cfg.r + 1))
    ys = tuple(int(y) for y in rng.permutation(cfg.k)[:s])
    return side, ys, [int(rng.integers(S.n_atoms)) for _ in ys]


def play_round_maltsev(
    st: MaltsevStrategy, mem: MaltsevMemory, pos: Position, side: str, ys, atoms, pick: int
) -> tuple[Position, MaltsevMemory, list]:
    P, mems = st.move(mem, pos, side, ys, atoms)
    b = P[pick % len(P)]
    new = pos.update(ys, atoms, b) if side == "right" else pos.update(ys, b, atoms)
    return new, mems[pick % len(P)], P


def reachable_states_maltsev(
    S: CFIStructure, T: CFIStructure, count: int, seed: int = 0, strategy: MaltsevStrategy | None = None
) -> list[tuple[Position, MaltsevMemory]]:
    cfg = GameConfig("maltsev", 3)
    st = strategy or MaltsevStrategy(S, T)
    rng = np.random.default_rng(seed)
    pos, mem = Position.empty(cfg.k), initial_memory_maltsev(S, T)
    out = []
    while len(out) < count:
        side, ys, atoms = targeted_move_maltsev(S, mem, cfg, rng)
        pos, mem, _ = play_round_maltsev(st, mem, pos, side, ys, atoms, int(rng.integers(3)))
        out.append((pos, mem))
    return out
