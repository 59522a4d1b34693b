"""Duplicator's strategy in the bijection game on near-unanimity CFI instances."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..cfi import CFIStructure, EdgeBijection, bad_vertices, path_shifts, safe_vertices, shift_images
from ..graphs import lex_shortest_path, path_vertices
from .core import (
    UNSET,
    GameConfig,
    NoSafeEscape,
    PartialIsoChecker,
    Position,
    Report,
    assign,
    iter_move_blocks,
)


@dataclass(frozen=True, eq=False)
class BPMemory:
    """Duplicator's memory: the cyclic bijection f (by its edge shifts) and the bar vertex u."""

    S: CFIStructure
    shifts: np.ndarray
    u: int

    @cached_property
    def f(self) -> EdgeBijection:
        return EdgeBijection(self.S, shift_images(self.S, self.shifts))

    def key(self) -> tuple:
        return (self.u, self.shifts.tobytes())

    def to_json(self) -> dict:
        return {"u": self.S.graph.labels[self.u], "shifts": self.shifts.tolist()}


@dataclass(frozen=True)
class Escape:
    """A strategy response: the new bar vertex and the correcting paths (first position, edges, value)."""

    target: int
    paths: tuple[tuple[int, tuple[int, ...], int], ...]


def initial_memory_bp(S: CFIStructure, T: CFIStructure) -> BPMemory:
    """Identity bijection, bad exactly at the twisted vertex."""
    odd = [v for v in S.graph.vertices if S.charge(v) != T.charge(v)]
    if len(odd) > 1:
        raise ValueError("instances differ in charge at more than one vertex")
    return BPMemory(S, np.zeros(S.graph.E, dtype=np.int64), odd[0] if odd else 0)


class BPStrategy:
    """The path-shifting strategy; responses depend only on u, the defect and the pebbled locations."""

    def __init__(self, S: CFIStructure, T: CFIStructure):
        if S.variant != T.variant or S.graph is not T.graph and S.graph != T.graph:
            raise ValueError("structures are not over the same graph and variant")
        if S.variant.kind == "maltsev":
            raise ValueError("use the Maltsev strategy for the Z_4 instances")
        g = S.graph
        if g.copy is None:
            raise ValueError("base graph has no copy metadata")
        self.S, self.T, self.g = S, T, g
        self.E, self.J = g.E, S.J
        self.W = S.variant.weights.tolist()
        copies = sorted(set(g.copy))
        self.copy_bit = {c: 1 << i for i, c in enumerate(copies)}
        self.loc_mask = [
            sum({self.copy_bit[g.copy[v]] for v in S.loc_vertices(l)}) for l in range(S.n_locations)
        ]
        self.vertex_need = [self.copy_bit[g.copy[v]] | self.copy_bit[g.partner[v]] for v in g.vertices]
        self.adj = [[(g.other(e, v), e) for e in g.inc[v]] for v in g.vertices]
        self._memo: dict = {}

    # -- helpers ----------------------------------------------------------

    def class_locs(self, v: int) -> list[int]:
        return [self.E + v * self.J + j for j in range(self.J)]

    def defect(self, mem: BPMemory) -> int:
        u = mem.u
        total = sum(int(mem.shifts[e]) for e in self.g.inc[u])
        return (self.S.charge(u) - self.T.charge(u) - total) % 3

    def safe(self, v: int, locs) -> bool:
        dirty = 0
        for l in locs:
            dirty |= self.loc_mask[l]
        return not dirty & self.vertex_need[v]

    def _reach(self, u: int, first: int, pv: set[int], pe: set[int]) -> set[int]:
        e = self.g.inc[u][first - 1]
        w = self.g.other(e, u)
        if e in pe:
            return set()
        seen = {w}
        if w in pv:
            return seen  # w may still serve as the target itself
        q = deque([w])
        while q:
            v = q.popleft()
            for x, e2 in self.adj[v]:
                if x == u or x in seen or e2 in pe:
                    continue
                seen.add(x)
                if x not in pv:
                    q.append(x)
        return seen

    # -- the strategy -------------------------------------------------------

    def respond(self, u: int, d: int, locs: frozenset) -> Escape:
        key = (u, d, locs)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = self._respond(u, d, locs)
        return hit

    def _respond(self, u: int, d: int, locs: frozenset) -> Escape:
        g, E, J = self.g, self.E, self.J
        pe = {l for l in locs if l < E}
        pv = {(l - E) // J for l in locs if l >= E}
        pebbled_js = [l - E - u * J for l in locs if l >= E and (l - E) // J == u]
        dirty = 0
        for l in locs:
            dirty |= self.loc_mask[l]
        candidates = [v for v in g.vertices if v != u and not dirty & self.vertex_need[v]]
        if not candidates:
            raise NoSafeEscape(f"no safe vertex for pebbled locations {sorted(locs)}")
        positions = range(1, g.d + 1)
        zero = [p for p in positions if all(self.W[j][p - 1] == 0 for j in pebbled_js)]
        reach = {p: self._reach(u, p, pv, pe) for p in positions}

        def path(p: int, target: int) -> tuple[int, ...]:
            found = lex_shortest_path(
                g, u, target,
                vertex_ok=lambda v: v not in pv,
                edge_ok=lambda e: e not in pe,
                first_positions=[p],
            )
            return tuple(found)

        single = set().union(*(reach[p] for p in zero)) if zero else set()
        for v in candidates:
            if v in single:
                found = lex_shortest_path(
                    g, u, v,
                    vertex_ok=lambda x: x not in pv,
                    edge_ok=lambda e: e not in pe,
                    first_positions=zero,
                )
                p = g.position(u, found[0])
                return Escape(v, ((p, tuple(found), d),))
        if not pebbled_js:
            raise NoSafeEscape(f"no pebble-free path from vertex {u} to a safe vertex")
        # split the correction over two exits so that the pebbled classes at u stay fixed
        for p, q in itertools.combinations(positions, 2):
            sol = self._split(d, p, q, pebbled_js)
            if sol is None:
                continue
            common = reach[p] & reach[q]
            for v in candidates:
                if v in common:
                    return Escape(v, ((p, path(p, v), sol[0]), (q, path(q, v), sol[1])))
        raise NoSafeEscape(f"no pair of exits from vertex {u} reaches a common safe vertex")

    def _split(self, d: int, p: int, q: int, js: list[int]) -> tuple[int, int] | None:
        for bp, bq in itertools.product((1, 2), repeat=2):
            if (bp + bq - d) % 3 == 0 and all(
                (self.W[j][p - 1] * bp + self.W[j][q - 1] * bq) % 3 == 0 for j in js
            ):
                return bp, bq
        return None

    def apply(self, mem: BPMemory, esc: Escape) -> BPMemory:
        shifts = mem.shifts.copy()
        for _, edges, b in esc.paths:
            shifts = (shifts + np.array(path_shifts(self.g, mem.u, edges, b, 3))) % 3
        return BPMemory(self.S, shifts, esc.target)

    def update(self, mem: BPMemory, pos: Position) -> BPMemory:
        locs = frozenset(int(self.S.atom_loc[x]) for x in pos.atoms())
        return self.apply(mem, self.respond(mem.u, self.defect(mem), locs))


def duplicator_move_bp(mem: BPMemory, S: CFIStructure | None = None, T: CFIStructure | None = None) -> EdgeBijection:
    """The bijection Duplicator plays: the memory's f."""
    return mem.f


def duplicator_update_bp(mem: BPMemory, pos: Position, strategy: BPStrategy) -> BPMemory:
    """The memory after Spoiler's placement ``pos``."""
    return strategy.update(mem, pos)


# -- invariant ------------------------------------------------------------


def good_bar(f: EdgeBijection, T: CFIStructure, u: int) -> bool:
    return f.is_edge_preserving() and set(bad_vertices(f, T)) <= {u}


def check_invariant_bp(S: CFIStructure, T: CFIStructure, pos: Position, mem: BPMemory) -> bool:
    if S.graph != T.graph or S.variant != T.variant:
        raise ValueError("structural mismatch between the instances")
    f = mem.f
    for a, b in zip(pos.alpha, pos.beta):
        if a is not None and f(a) != b:
            return False
    if not good_bar(f, T, mem.u):
        return False
    return mem.u in safe_vertices(S, pos.atoms())


# -- one-round verification -------------------------------------------------


class BPVerifier:
    """Vectorized check of one round of the strategy against every Spoiler move.

    The strategy's response to a pebble set L is recomputed cheaply from a
    response for a subset L0 of L: pebbling more locations only removes safe
    vertices and pebble-free paths, so if the least safe vertex for L is
    reached by the lex-least path computed for L0 and that path avoids L, the
    path is also the lex-least one for L.
    """

    def __init__(self, S: CFIStructure, T: CFIStructure, config: GameConfig, strategy: BPStrategy | None = None):
        if config.kind != "bijection":
            raise ValueError("expected a bijection-game configuration")
        self.S, self.T, self.config = S, T, config
        self.strategy = strategy or BPStrategy(S, T)
        self.checker = PartialIsoChecker(S.structure, T.structure, config.k)
        st = self.strategy
        self.nloc = S.n_locations
        # padded location tables: index nloc stands for "no pebble"
        self.loc_mask = np.array(st.loc_mask + [0], dtype=np.int64)
        self.need = np.array(st.vertex_need, dtype=np.int64)
        self.ncopies = len(st.copy_bit)
        self._first: dict[int, np.ndarray] = {}
        self._paths: dict[tuple, tuple | None] = {}
        self._good: dict[tuple, bool] = {}
        self.slow_calls = 0

    def first_safe(self, u: int) -> np.ndarray:
        """Least safe vertex other than u, for every mask of dirty copies (-1 if none)."""
        hit = self._first.get(u)
        if hit is None:
            masks = np.arange(1 << self.ncopies)
            ok = (masks[:, None] & self.need[None, :]) == 0
            ok[:, u] = False
            hit = np.where(ok.any(axis=1), ok.argmax(axis=1), -1)
            self._first[u] = hit
        return hit

    def zero_positions(self, ucode: int) -> tuple[int, ...]:
        W, d = self.strategy.W, self.S.graph.d
        js = [j for j in range(self.S.J) if ucode >> j & 1]
        return tuple(p for p in range(1, d + 1) if all(W[j][p - 1] == 0 for j in js))

    def cached_path(self, u: int, sub: frozenset, v: int, zero: tuple[int, ...]):
        """(edges, blocking locations) of the lex-least path in the graph minus ``sub``."""
        key = (u, sub, v, zero)
        if key not in self._paths:
            st, E, J = self.strategy, self.S.graph.E, self.S.J
            pe = {l for l in sub if l < E}
            pv = {(l - E) // J for l in sub if l >= E}
            found = lex_shortest_path(
                self.S.graph, u, v,
                vertex_ok=lambda x: x not in pv,
                edge_ok=lambda e: e not in pe,
                first_positions=zero,
            ) if zero else None
            if found is None:
                self._paths[key] = None
            else:
                block = np.zeros(self.nloc + 1, dtype=bool)
                block[found] = True
                for x in path_vertices(self.S.graph, u, found)[1:]:
                    block[st.class_locs(x)] = True
                self._paths[key] = (tuple(found), block)
        return self._paths[key]

    def resolve(self, u: int, d: int, kept: frozenset, L: frozenset, v: int, zero: tuple[int, ...]) -> Escape:
        g = self.S.graph
        extra = sorted(L - kept)
        for sub in [kept] + [kept | {l} for l in extra]:
            hit = self.cached_path(u, frozenset(sub), v, zero)
            if hit is not None and not any(hit[1][l] for l in L - sub):
                return Escape(v, ((g.position(u, hit[0][0]), hit[0], d),))
        self.slow_calls += 1
        return self.strategy.respond(u, d, L)

    def good(self, mem: BPMemory) -> bool:
        key = mem.key()
        hit = self._good.get(key)
        if hit is None:
            hit = self._good[key] = good_bar(mem.f, self.T, mem.u)
        return hit

    def verify(self, pos: Position, mem: BPMemory, budget: int = 5_000_000, seed: int = 0) -> Report:
        S, cfg, st = self.S, self.config, self.strategy
        rng = np.random.default_rng(seed)
        exhaustive, total, blocks = iter_move_blocks(cfg.k, cfg.r, S.n_atoms, budget, rng)
        rep = Report("bp-one-round", total_moves=total, exhaustive=exhaustive)
        rep.extra["precondition"] = check_invariant_bp(S, self.T, pos, mem)
        al, be = pos.arrays()
        f = mem.f.images
        u, d = mem.u, st.defect(mem)
        loc = np.append(S.atom_loc, self.nloc)  # atom UNSET (-1) maps to the padding location
        ubit = np.zeros(self.nloc + 1, dtype=np.int64)
        for j, l in enumerate(st.class_locs(u)):
            ubit[l] = 1 << j
        first = self.first_safe(u)
        responses: dict[Escape, int] = {}
        mems: list[BPMemory] = []
        done: dict[frozenset, int] = {}
        for ys, A in blocks:
            if exhaustive and frozenset(ys) in done:
                # the same variables in another order reach exactly the same positions
                rep.checked += len(A)
                continue
            bad_before = rep.violations
            alpha = assign(al, ys, A)
            beta = assign(be, ys, f[A])
            rep.checked += len(A)
            wins = ~self.checker.batch(alpha, beta)
            locs = loc[alpha]  # (N, k), padding where unassigned
            kept_vars = [i for i in range(cfg.k) if i not in ys and al[i] != UNSET]
            kept = frozenset(int(loc[al[i]]) for i in kept_vars)
            # dedupe rows by their set of new locations
            new = np.sort(locs[:, list(ys)], axis=1)
            key = np.zeros(len(A), dtype=np.int64)
            for c in range(new.shape[1]):
                key = key * (self.nloc + 1) + new[:, c]
            uniq, first_row, inv = np.unique(key, return_index=True, return_inverse=True)
            ul = locs[first_row]  # (U, k)
            dirty = np.bitwise_or.reduce(self.loc_mask[ul], axis=1)
            ucode = np.bitwise_or.reduce(ubit[ul], axis=1)
            target = first[dirty]
            resp = np.full(len(uniq), -1, dtype=np.int64)
            newcols = ul[:, list(ys)]
            for (v, uc) in set(zip(target.tolist(), ucode.tolist())):
                if v < 0:
                    continue
                zero = self.zero_positions(uc)
                hit = self.cached_path(u, kept, v, zero)
                if hit is None:
                    continue
                grp = (target == v) & (ucode == uc)
                free = ~np.any(hit[1][newcols], axis=1)
                sel = grp & free
                if sel.any():
                    esc = Escape(v, ((S.graph.position(u, hit[0][0]), hit[0], d),))
                    resp[sel] = responses.setdefault(esc, len(responses))
            for i in np.flatnonzero(resp < 0):
                L = frozenset(int(x) for x in ul[i] if x < self.nloc)
                try:
                    if target[i] < 0:
                        raise NoSafeEscape(f"no safe vertex for pebbled locations {sorted(L)}")
                    esc = self.resolve(u, d, kept, L, int(target[i]), self.zero_positions(int(ucode[i])))
                except NoSafeEscape as exc:
                    rep.note(f"vars {ys}: locations {sorted(L)}: {exc}")
                    continue
                resp[i] = responses.setdefault(esc, len(responses))
            for esc, idx in responses.items():
                if idx == len(mems):
                    mems.append(st.apply(mem, esc))
            failed = resp < 0
            rid = np.where(failed, 0, resp)
            if mems:
                table = np.stack([m.f.images for m in mems])
                good = np.array([self.good(m) for m in mems])
                tgt = np.array([m.u for m in mems])
            else:
                table = np.zeros((1, S.n_atoms), dtype=np.int64)
                good = np.zeros(1, dtype=bool)
                tgt = np.zeros(1, dtype=np.int64)
            safe = (dirty & self.need[tgt[rid]]) == 0
            mid = rid[inv]
            img = table[mid[:, None], np.where(alpha == UNSET, 0, alpha)]
            consistent = np.all((alpha == UNSET) | (img == beta), axis=1)
            ok = ~wins & consistent & good[mid] & safe[inv]
            bad = ~ok & ~failed[inv]
            for i in np.flatnonzero(bad)[: Report.MAX_EXAMPLES]:
                why = "spoiler wins" if wins[i] else "f'(alpha') != beta'" if not consistent[i] else (
                    "not good bar u'" if not good[mid[i]] else "u' not safe"
                )
                rep.note(f"vars {ys}: atoms {A[i].tolist()}: {why}")
            rep.violations += int(bad.sum()) + int(failed[inv].sum())
            if exhaustive:
                done[frozenset(ys)] = rep.violations - bad_before
        rep.extra["defect"] = d
        rep.extra["responses"] = len(responses)
        return rep


def verify_one_round_bp(
    S: CFIStructure,
    T: CFIStructure,
    pos: Position,
    mem: BPMemory,
    budget: int = 5_000_000,
    seed: int = 0,
    config: GameConfig | None = None,
    verifier: BPVerifier | None = None,
) -> Report:
    verifier = verifier or BPVerifier(S, T, config or GameConfig("bijection", 3, 2))
    return verifier.verify(pos, mem, budget, seed)


def targeted_move(S: CFIStructure, mem: BPMemory, cfg: GameConfig, rng: np.random.Generator) -> tuple[tuple[int, ...], list[int]]:
    """A Spoiler move that tends to land near the bar vertex, to exercise the harder cases."""
    g = S.graph
    s = int(rng.integers(1, cfg.r + 1))
    ys = tuple(int(y) for y in rng.permutation(cfg.k)[:s])
    u = mem.u
    near = [S.vertex_atom(u, a, j) for j in range(1, S.J + 1) for a in range(3)]
    for e in g.inc[u]:
        near += [S.edge_atom(e, a) for a in range(S.m)]
        w = g.other(e, u)
        near += [S.vertex_atom(w, a, j) for j in range(1, S.J + 1) for a in range(3)]
    atoms = []
    for _ in ys:
        if rng.random() < 0.6:
            atoms.append(int(near[rng.integers(len(near))]))
        else:
            atoms.append(int(rng.integers(S.n_atoms)))
    return ys, atoms


def reachable_states_bp(
    S: CFIStructure,
    T: CFIStructure,
    count: int,
    seed: int = 0,
    config: GameConfig | None = None,
    strategy: BPStrategy | None = None,
) -> list[tuple[Position, BPMemory]]:
    """States reached by the strategy under seeded play mixing uniform and targeted Spoiler moves."""
    cfg = config or GameConfig("bijection", 3, 2)
    st = strategy or BPStrategy(S, T)
    rng = np.random.default_rng(seed)
    pos, mem = Position.empty(cfg.k), initial_memory_bp(S, T)
    out = []
    while len(out) < count:
        ys, atoms = targeted_move(S, mem, cfg, rng)
        f = mem.f
        pos = pos.update(ys, atoms, [f(x) for x in atoms])
        mem = st.update(mem, pos)
        out.append((pos, mem))
    return out
