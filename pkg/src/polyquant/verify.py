"""Registry of brute-force lemma verifiers, each returning a JSON-ready report."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .cfi import (
    Variant,
    classify_gadget_map,
    classify_permutation_z4,
    cyclic_bijection,
    permutation_bijection,
    twisted,
    untwisted,
    z4_bijection,
)
from .csp import csp_member, enumerate_homomorphism, hypergraph_to_graph
from .games.core import BudgetExceeded
from .graphs import BaseGraph, biclique, biclique_minus_matching, complete_graph, composite_graph, toroidal_grid
from .partial_poly import (
    NU,
    apply_to_relation,
    close_relation,
    default_division,
    majority_closure_check,
    star_operator,
    verify_arity_trick,
)
from .structures import RelSymbol, Structure, find_isomorphism
from .templates import clique, template_nu, template_nu_star, uniform_hypergraph

MAX_EXAMPLES = 20


@dataclass(frozen=True)
class Options:
    seed: int = 0
    budget: int = 5_000_000
    count: int = 100
    states: int = 20


def report(
    lemma: str, checked: int, violations: list, coverage: str = "exhaustive", count: int | None = None, **extra
) -> dict:
    return {
        "lemma": lemma,
        "coverage": coverage,
        "checked": int(checked),
        "violations": len(violations) if count is None else count,
        "examples": [str(v) for v in violations[:MAX_EXAMPLES]],
        **extra,
    }


def _from_linalg(rep: dict) -> dict:
    bad = list(rep["violations"]) + [f"internal: {x}" for x in rep["internal_check_violations"]]
    extra = {k: v for k, v in rep.items() if k not in ("lemma", "checked", "violations", "internal_check_violations")}
    return report(rep["lemma"], rep["checked"], bad, **extra)


# -- matrix lemmas ----------------------------------------------------------


def lemma_base_separating(opts: Options) -> dict:
    return _from_linalg(linalg.verify_lemma_base())


def lemma_separating(opts: Options, ell: int) -> dict:
    return _from_linalg(linalg.verify_lemma_separating(ell))


def lemma_row_back(opts: Options, ell: int) -> dict:
    return _from_linalg(linalg.verify_lemma_row_back(ell))


def lemma_pairs(opts: Options, ell: int, width: int) -> dict:
    return _from_linalg(linalg.verify_lemma_pairs(ell, width))


# -- template closure -------------------------------------------------------


def lemma_poly_closed(opts: Options, ell: int) -> dict:
    B = template_nu(ell)
    checked, bad = 0, []
    for name, R in sorted(B.relations.items()):
        checked += len(R) ** ell
        bad += [(name, t) for t in sorted(apply_to_relation(NU(ell), R) - R)]
    return report(f"poly-closed:{ell}", checked, bad, template=f"nu:{ell}")


def lemma_poly_closed_star(opts: Options, r: int, ell: int) -> dict:
    B = template_nu_star(r, ell)
    checked, bad = 0, []
    for name, R in sorted(B.relations.items()):
        if ell == 3 and B.max_arity <= 39:
            n, miss = majority_closure_check(R)
            checked += n
            bad += [(name, t) for t in miss]
            continue
        if len(R) ** ell > opts.budget:
            raise BudgetExceeded(f"{len(R)}^{ell} row tuples in {name} exceed the budget {opts.budget}")
        checked += len(R) ** ell
        bad += [(name, t) for t in sorted(apply_to_relation(NU(ell), R) - R)]
    return report(f"poly-closed-star:{r},{ell}", checked, bad, arity=B.max_arity)


# -- arity reduction --------------------------------------------------------


def random_nu_closed(rng: np.random.Generator, ell: int, r: int, dom: int, seeds: int | None = None) -> frozenset:
    """NU(ell)-closure of a few random r-tuples over range(dom)."""
    k = int(rng.integers(1, 5)) if seeds is None else seeds
    R = {tuple(int(x) for x in rng.integers(0, dom, size=r)) for _ in range(k)}
    return close_relation(NU(ell), R)[0]


ARITY_CASES = ((3, 3, 3), (3, 4, 3), (4, 5, 2))  # (ell, r, domain size)


def lemma_arity_trick(opts: Options) -> dict:
    rng = np.random.default_rng(opts.seed)
    checked, bad = 0, []
    sizes = []
    for ell, r, dom in ARITY_CASES:
        div = default_division(r, ell)
        for _ in range(opts.count):
            R = random_nu_closed(rng, ell, r, dom)
            sizes.append(len(R) / dom**r)
            checked += 1
            if not verify_arity_trick(R, ell, div, range(dom)):
                bad.append((ell, r, sorted(R)))
    return report(
        "arity-trick", checked, bad, coverage="sampled", seed=opts.seed,
        cases=[list(c) for c in ARITY_CASES], mean_density=round(float(np.mean(sizes)), 3),
    )


def _random_structure(rng: np.random.Generator, vocab, n: int, max_tuples: int) -> Structure:
    rels = {}
    for sym in vocab:
        k = int(rng.integers(0, max_tuples + 1))
        rels[sym.name] = {tuple(int(x) for x in rng.integers(0, n, size=sym.arity)) for _ in range(k)}
    return Structure.build(vocab, range(n), rels)


def lemma_csp_reduction(opts: Options) -> dict:
    """hom(A, B) iff hom(A*, B*) for NU-closed B, decided by map enumeration."""
    rng = np.random.default_rng(opts.seed)
    checked, bad, agree_yes = 0, [], 0
    for i in range(opts.count):
        ell, r = 3, (3, 4)[i % 2]
        div = default_division(r, ell)
        vocab = [RelSymbol("R", r)]
        dom = int(rng.integers(2, 4))
        B = Structure.build(vocab, range(dom), {"R": random_nu_closed(rng, ell, r, dom)})
        A = _random_structure(rng, vocab, int(rng.integers(1, 6)), 3)
        h = enumerate_homomorphism(A, B) is not None
        hs = enumerate_homomorphism(star_operator(A, div), star_operator(B, div)) is not None
        checked += 1
        agree_yes += h
        if h != hs:
            bad.append((sorted(A.relations["R"]), sorted(B.relations["R"]), h, hs))
    return report("csp-reduction", checked, bad, coverage="sampled", seed=opts.seed, homomorphic=agree_yes)


HYPERGRAPH_CASES = ((3, 2), (3, 3), (4, 3))


def lemma_hypergraph_reduction(opts: Options) -> dict:
    rng = np.random.default_rng(opts.seed)
    checked, bad, yes = 0, [], 0
    for r, m in HYPERGRAPH_CASES:
        H, K = uniform_hypergraph(r, m), clique(m)
        for _ in range(opts.count):
            n = int(rng.integers(1, 7))
            A = _random_structure(rng, [RelSymbol("R", r)], n, 4)
            A = Structure.build(A.vocab, [x + 1 for x in A.universe], {"R": [tuple(x + 1 for x in t) for t in A.relations["R"]]})
            left = csp_member(A, H)
            right = csp_member(hypergraph_to_graph(A), K)
            checked += 1
            yes += left
            if left != right:
                bad.append((r, m, sorted(A.relations["R"]), left, right))
    return report(
        "hypergraph-reduction", checked, bad, coverage="sampled", seed=opts.seed,
        cases=[list(c) for c in HYPERGRAPH_CASES], colourable=yes,
    )


# -- Tseitin systems --------------------------------------------------------


def tseitin_graphs() -> list[BaseGraph]:
    return [biclique(3), biclique_minus_matching(3), biclique_minus_matching(4), toroidal_grid(4, [4, 4]), composite_graph(3, 4)]


def _exhaustive_solvable(graph: BaseGraph, charges: dict, m: int) -> bool:
    E = graph.E
    X = np.indices((m,) * E, dtype=np.int8).reshape(E, -1)
    ok = np.ones(X.shape[1], dtype=bool)
    for v in graph.vertices:
        ok &= X[list(graph.inc[v])].sum(axis=0) % m == charges.get(v, 0) % m
    return bool(ok.any())


def lemma_tseitin(opts: Options) -> dict:
    """Uniform charges are solvable, a single changed charge is not; small systems cross-checked by enumeration."""
    checked, bad, cross = 0, [], 0
    for g in tseitin_graphs():
        for m in (3, 4):
            for a in range(m):
                uniform = {v: a for v in g.vertices}
                systems = [(uniform, True)]
                for c in range(m):
                    if c != a:
                        systems.append(({**uniform, 0: c}, False))
                for charges, expect in systems:
                    sys_ = linalg.tseitin_system(g, charges, m)
                    x = linalg.solve(sys_)
                    checked += 1
                    if (x is not None) != expect or (x is not None and not sys_.satisfied_by(x)):
                        bad.append((g.name, m, a, charges[0], x is not None))
                    if m**g.E <= 1 << 20:
                        cross += 1
                        if _exhaustive_solvable(g, charges, m) != (x is not None):
                            bad.append(("enumeration disagrees", g.name, m, a, charges[0]))
    return report("tseitin", checked, bad, graphs=[g.name for g in tseitin_graphs()], enumerated=cross)


def lemma_near_solution(opts: Options) -> dict:
    checked, bad = 0, []
    for g in tseitin_graphs():
        for m in (3, 4):
            for a in range(m):
                for c in range(m):
                    charges = {**{v: a for v in g.vertices}, 0: c}
                    for vp in g.vertices:
                        lam = linalg.near_solution(g, charges, m, vp)
                        checked += 1
                        off = [v for v in g.vertices if linalg.defect_at(g, charges, m, lam, v)]
                        if any(v != vp for v in off):
                            bad.append((g.name, m, a, c, vp, off))
                        elif (not off) != (c == a):
                            bad.append((g.name, m, a, c, vp, "defect at v' does not match solvability"))
    return report("near-solution", checked, bad, graphs=[g.name for g in tseitin_graphs()])


# -- gadget classification --------------------------------------------------


def lemma_comp_isom(opts: Options, ell: int = 3) -> dict:
    """Cyclic maps on one gadget: f is an isomorphism A(v,s) -> A(v,s-c(f))."""
    g = complete_graph(ell + 1)
    S = untwisted(g, Variant.parse(f"nu:{ell}"))
    v = 0
    checked, bad = 0, []
    for c in itertools.product(range(3), repeat=ell):
        shifts = [0] * g.E
        for e, x in zip(g.inc[v], c):
            shifts[e] = x
        delta = classify_gadget_map(cyclic_bijection(S, shifts), v, S, S)
        checked += 1
        if delta != (-sum(c)) % 3:
            bad.append((c, delta))
    return report(f"comp-isom:{ell}", checked, bad, rule="delta = -c(f) mod 3")


def lemma_local_isom(opts: Options) -> dict:
    g = biclique_minus_matching(3)
    S = untwisted(g, Variant.parse("maltsev:3"))
    v = 0
    checked, bad = 0, []
    rule = {"rotation": {0: "preserves", 2: "swaps"}, "reflection": {1: "preserves", 3: "swaps"}}
    for mode in ("rotation", "reflection"):
        for c in itertools.product(range(4), repeat=3):
            shifts = [0] * g.E
            for e, x in zip(g.inc[v], c):
                shifts[e] = x
            modes = ["rotation"] * g.E
            for e in g.inc[v]:
                modes[e] = mode
            got = classify_gadget_map(z4_bijection(S, modes, shifts), v, S, S)
            want = rule[mode].get(sum(c) % 4, "neither")
            checked += 1
            if got != want:
                bad.append((mode, c, got, want))
    # mixed maps: some edge not a rotation and some edge not a reflection never preserve
    rng = np.random.default_rng(opts.seed)
    perms = list(itertools.permutations(range(4)))
    kinds = {p: classify_permutation_z4(p)[0] for p in perms}
    sampled = 0
    while sampled < 1000:
        choice = [perms[int(i)] for i in rng.integers(0, 24, size=3)]
        if all(kinds[p] == "rotation" for p in choice) or all(kinds[p] == "reflection" for p in choice):
            continue
        f = permutation_bijection(S, dict(zip(g.inc[v], choice)))
        got = classify_gadget_map(f, v, S, S)
        sampled += 1
        if got == "preserves":
            bad.append(("mixed", choice))
    return report("local-isom", checked + sampled, bad, exhaustive_vectors=checked, mixed_samples=sampled, seed=opts.seed)


def lemma_z4_permutations(opts: Options) -> dict:
    counts = {"rotation": 0, "reflection": 0, "other": 0}
    bad = []
    for p in itertools.permutations(range(4)):
        kind, c = classify_permutation_z4(p)
        counts[kind] += 1
        rot = any(all(p[x] == (x + a) % 4 for x in range(4)) for a in range(4))
        refl = any(all(p[x] == (a - x) % 4 for x in range(4)) for a in range(4))
        if (kind == "rotation") != rot or (kind == "reflection") != refl:
            bad.append((p, kind, "classification"))
        step = any(p[(x + 1) % 4] == (p[x] + 1) % 4 for x in range(4))
        if not (step or refl):
            bad.append((p, "neither case of the dichotomy"))
    if counts != {"rotation": 4, "reflection": 4, "other": 16}:
        bad.append(("counts", counts))
    return report("z4-permutations", 24, bad, **counts)


# -- Maltsev instances ------------------------------------------------------


def lemma_non_isomorphism(opts: Options, k: int = 3) -> dict:
    g = biclique_minus_matching(k)
    variant = Variant.parse(f"maltsev:{k}")
    S, T = untwisted(g, variant), twisted(g, variant)
    classes = [[e * 4 + a for a in range(4)] for e in range(g.E)]
    t0 = time.perf_counter()
    iso = find_isomorphism(S.structure, T.structure, (classes, classes))
    bad = []
    if iso is not None:
        bad.append("isomorphism found")
    twist = {v: 2 * (T.charge(v) - S.charge(v)) % 4 for v in g.vertices}
    systems = {}
    for mode, base in (("rotation", 0), ("reflection", 1)):
        charges = {v: (base + twist[v]) % 4 for v in g.vertices}
        x = linalg.solve(linalg.tseitin_system(g, charges, 4))
        systems[mode] = "unsolvable" if x is None else "solvable"
        if x is not None:
            bad.append(f"{mode} system solvable")
    return report(
        f"non-isomorphism:{k}", 1 + len(systems), bad, graph=g.name,
        isomorphism="absent" if iso is None else "found", tseitin=systems,
        search_seconds=round(time.perf_counter() - t0, 3),
    )


# -- game invariants ------------------------------------------------------


def lemma_bp_invariant(opts: Options, n: int = 7) -> dict:
    from .games.bijection import BPVerifier, check_invariant_bp, initial_memory_bp, reachable_states_bp
    from .games.core import GameConfig, Position

    g = composite_graph(3, n)
    variant = Variant.parse("nu:3")
    S, T = untwisted(g, variant), twisted(g, variant)
    cfg = GameConfig("bijection", 3, 2)
    ver = BPVerifier(S, T, cfg)
    states = [(Position.empty(3), initial_memory_bp(S, T))]
    states += reachable_states_bp(S, T, opts.states, opts.seed, cfg, ver.strategy)
    checked, bad, count, exhaustive = 0, [], 0, True
    for i, (pos, mem) in enumerate(states):
        if not check_invariant_bp(S, T, pos, mem):
            bad.append(f"state {i}: invariant fails before the round")
            count += 1
        rep = ver.verify(pos, mem, opts.budget, opts.seed)
        checked += rep.checked
        exhaustive &= rep.exhaustive
        bad += [f"state {i}: {x}" for x in rep.examples]
        count += rep.violations
    return report(
        "bp-invariant", checked, bad, coverage="exhaustive" if exhaustive else "sampled", count=count,
        graph=g.name, states=len(states), seed=opts.seed,
    )


def lemma_maltsev_invariant(opts: Options, k: int = 3) -> dict:
    from .games.core import Position
    from .games.maltsev import MaltsevVerifier, check_invariant_maltsev, initial_memory_maltsev, reachable_states_maltsev

    g = biclique_minus_matching(k)
    variant = Variant.parse(f"maltsev:{k}")
    S, T = untwisted(g, variant), twisted(g, variant)
    ver = MaltsevVerifier(S, T)
    states = [(Position.empty(3), initial_memory_maltsev(S, T))]
    states += reachable_states_maltsev(S, T, opts.states, opts.seed, ver.strategy)
    checked, bad, count = 0, [], 0
    for i, (pos, mem) in enumerate(states):
        if not check_invariant_maltsev(S, T, pos, mem):
            bad.append(f"state {i}: invariant fails before the round")
            count += 1
        rep = ver.verify(pos, mem)
        checked += rep.checked
        bad += [f"state {i}: {x}" for x in rep.examples]
        count += rep.violations
    return report("maltsev-invariant", checked, bad, count=count, graph=g.name, states=len(states), seed=opts.seed)


# -- registry -------------------------------------------------------------


@dataclass(frozen=True)
class Lemma:
    name: str
    run: Callable
    params: int  # number of integer parameters after the colon (0 = none)
    defaults: tuple = ()


LEMMAS = {
    lm.name: lm
    for lm in [
        Lemma("base-separating", lemma_base_separating, 0),
        Lemma("separating", lemma_separating, 1),
        Lemma("row-back", lemma_row_back, 1),
        Lemma("pairs", lemma_pairs, 2),
        Lemma("poly-closed", lemma_poly_closed, 1),
        Lemma("poly-closed-star", lemma_poly_closed_star, 2),
        Lemma("arity-trick", lemma_arity_trick, 0),
        Lemma("csp-reduction", lemma_csp_reduction, 0),
        Lemma("hypergraph-reduction", lemma_hypergraph_reduction, 0),
        Lemma("tseitin", lemma_tseitin, 0),
        Lemma("near-solution", lemma_near_solution, 0),
        Lemma("comp-isom", lemma_comp_isom, 1, (3,)),
        Lemma("local-isom", lemma_local_isom, 0),
        Lemma("z4-permutations", lemma_z4_permutations, 0),
        Lemma("non-isomorphism", lemma_non_isomorphism, 1, (3,)),
        Lemma("bp-invariant", lemma_bp_invariant, 1, (7,)),
        Lemma("maltsev-invariant", lemma_maltsev_invariant, 1, (3,)),
    ]
}


def parse_lemma(text: str) -> tuple[Lemma, tuple[int, ...]]:
    name, _, rest = text.partition(":")
    if name not in LEMMAS:
        raise ValueError(f"unknown lemma {name!r}; known: {', '.join(LEMMAS)}")
    lm = LEMMAS[name]
    try:
        params = tuple(int(x) for x in rest.split(",")) if rest else lm.defaults
    except ValueError:
        raise ValueError(f"parameters of {name} must be integers") from None
    if len(params) != lm.params:
        raise ValueError(f"{name} takes {lm.params} parameter(s)")
    return lm, params


def run_lemma(text: str, opts: Options | None = None) -> dict:
    lm, params = parse_lemma(text)
    opts = opts or Options()
    t0 = time.perf_counter()
    rep = lm.run(opts, *params)
    rep["seconds"] = round(time.perf_counter() - t0, 3)
    return rep
