from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyquant import linalg
from polyquant.graphs import biclique, biclique_minus_matching, complete_graph, composite_graph, from_edges, toroidal_grid
from polyquant.linalg import (
    LinearSystem,
    MatrixModM,
    build_separator_set,
    defect_at,
    has_nu_property,
    near_solution,
    nu_image,
    nu_matrix_count,
    perfect_matching,
    solve,
    tseitin_system,
)


def test_matrix_validation():
    with pytest.raises(ValueError):
        MatrixModM(5, 1, 1, (0,))
    with pytest.raises(ValueError):
        MatrixModM(3, 2, 2, (0, 1, 2))
    with pytest.raises(ValueError):
        MatrixModM(3, 1, 1, (3,))


def test_nu_property_examples():
    assert has_nu_property(MatrixModM.from_rows([[1, 1], [1, 1], [1, 1]]))
    identity = MatrixModM.from_rows([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert has_nu_property(identity) and nu_image(identity) == (0, 0, 0)
    assert not has_nu_property(MatrixModM.from_rows([[0], [1], [2]]))
    assert identity @ (0, 1, 2) == (0, 1, 2)


@pytest.mark.parametrize("ell, width, q, p, size", [(3, 7, 3, 1, 18), (4, 9, 3, 0, 18), (3, 3, 1, 1, 2)])
def test_separator_set(ell, width, q, p, size):
    U = build_separator_set(ell, width)
    assert (U.q, U.p, U.size) == (q, p, size)
    assert U.size == U.formula(ell, width)
    assert sorted(c for b in U.blocks for c in b) == list(range(width))
    for u in U.vectors:
        nz = [i for i, x in enumerate(u) if x]
        assert len(nz) == 2 and any(set(nz) <= set(b) for b in U.blocks)
    with pytest.raises(ValueError):
        build_separator_set(3, 2)


def brute_base():
    """Independent pure-Python sweep of all 3x3 matrices: (hypotheses met, violations)."""
    hyp = bad = 0
    for entries in itertools.product(range(3), repeat=9):
        M = MatrixModM(3, 3, 3, entries)
        if not has_nu_property(M):
            continue
        sums = {sum(r) % 3 for r in M.as_rows()}
        if len(sums) != 1 or nu_image(M) in M.as_rows():
            continue
        hyp += 1
        if len(set(M @ (0, 1, 2))) != 3:
            bad += 1
    return hyp, bad


def test_base_sweep_matches_brute_force():
    rep = linalg.verify_lemma_base()
    assert rep["checked"] == 3**9
    assert (rep["hypotheses_met"], len(rep["violations"])) == brute_base()
    assert rep["violations"] == [] and rep["internal_check_violations"] == []


def test_nu_enumeration_counts():
    assert nu_matrix_count(3, 3) == 21**3 == 9261
    assert nu_matrix_count(4, 4) == 27**4 == 531441
    n = sum(len(b.M) for b in linalg.nu_matrices(3, 3))
    assert n == 9261


def brute_separating(ell):
    hyp = bad = 0
    cols = [c for c in itertools.product(range(3), repeat=ell) if max(c.count(x) for x in c) >= ell - 1]
    u = (0, 1, 2) + (0,) * (ell - 3)
    for chosen in itertools.product(cols, repeat=ell):
        rows = [tuple(c[i] for c in chosen) for i in range(ell)]
        M = MatrixModM.from_rows(rows)
        if len({sum(r) % 3 for r in rows}) != 1 or nu_image(M) in rows:
            continue
        hyp += 1
        if len(set(M @ u)) < 3:
            bad += 1
    return hyp, bad


def test_separating_three_matches_brute_force():
    rep = linalg.verify_lemma_separating(3)
    assert (rep["hypotheses_met"], len(rep["violations"])) == brute_separating(3)
    assert rep["checked"] == 9261


@pytest.mark.parametrize("ell", [3, 4])
def test_separating_and_row_back(ell):
    for rep in (linalg.verify_lemma_separating(ell), linalg.verify_lemma_row_back(ell)):
        assert rep["violations"] == [] and rep["internal_check_violations"] == []
        assert rep["checked"] == nu_matrix_count(ell, ell)


def test_row_back_brute_force_three():
    hyp = bad = 0
    cols = [c for c in itertools.product(range(3), repeat=3) if len(set(c)) < 3]
    for chosen in itertools.product(cols, repeat=3):
        rows = [tuple(c[i] for c in chosen) for i in range(3)]
        if len({sum(r) % 3 for r in rows}) != 1:
            continue
        hyp += 1
        M = MatrixModM.from_rows(rows)
        if (nu_image(M) in rows) != (len(set(rows)) < 3):
            bad += 1
    rep = linalg.verify_lemma_row_back(3)
    assert (rep["hypotheses_met"], len(rep["violations"])) == (hyp, bad)


def test_pairs_small():
    rep = linalg.verify_lemma_pairs(3, 3)
    assert rep["violations"] == [] and rep["checked"] == 9261
    assert rep["image_not_row"] + rep["image_is_row"] == 9261
    with pytest.raises(ValueError):
        linalg.verify_lemma_pairs(5, 5)
    with pytest.raises(ValueError):
        linalg.verify_lemma_separating(5)


def c4():
    return from_edges(2, 4, [(0, 1), (1, 2), (2, 3), (0, 3)], side=[0, 1, 0, 1], name="C4")


def test_tseitin_system_shape():
    sys_ = tseitin_system(c4(), {}, 3)
    assert len(sys_.equations) == 4 and len(sys_.variables) == 4
    assert solve(sys_) == {e: 0 for e in range(4)}
    with pytest.raises(ValueError):
        tseitin_system(c4(), {0: 3}, 3)
    with pytest.raises(ValueError):
        LinearSystem(3, (0,), ((((1, 1),), 0),))
    with pytest.raises(ValueError):
        solve(LinearSystem(5, (0,), ()))


def test_c4_over_z4():
    sys_ = tseitin_system(c4(), {v: 1 for v in range(4)}, 4)
    x = solve(sys_)
    assert x is not None and sys_.satisfied_by(x)


def test_z4_unsolvable_twist_on_g3():
    g = biclique_minus_matching(3)
    charges = {v: 1 for v in g.vertices}
    charges[0] = 3
    assert solve(tseitin_system(g, charges, 4)) is None


def brute_solvable(system: LinearSystem) -> bool:
    for vals in itertools.product(range(system.modulus), repeat=len(system.variables)):
        if system.satisfied_by(dict(zip(system.variables, vals))):
            return True
    return False


@st.composite
def systems(draw, m):
    n = draw(st.integers(1, 5 if m == 4 else 6))
    k = draw(st.integers(1, 5))
    eqs = []
    for _ in range(k):
        coeffs = tuple((v, draw(st.integers(0, m - 1))) for v in range(n) if draw(st.booleans()))
        eqs.append((coeffs, draw(st.integers(0, m - 1))))
    return LinearSystem(m, tuple(range(n)), tuple(eqs))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([2, 3, 4]).flatmap(systems))
def test_solver_matches_enumeration(system):
    x = solve(system)
    assert (x is not None) == brute_solvable(system)
    if x is not None:
        assert system.satisfied_by(x)


def test_z4_solver_exhaustive_up_to_eight_variables():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n = int(rng.integers(6, 9))
        k = int(rng.integers(2, 6))
        eqs = tuple(
            (tuple((v, int(rng.integers(4))) for v in range(n)), int(rng.integers(4))) for _ in range(k)
        )
        S = LinearSystem(4, tuple(range(n)), eqs)
        x = solve(S)
        assert (x is not None) == brute_solvable(S)


@pytest.mark.parametrize(
    "graph", [biclique(3), biclique_minus_matching(3), biclique_minus_matching(4), toroidal_grid(4, [4, 4])], ids=lambda g: g.name
)
@pytest.mark.parametrize("m", [3, 4])
def test_tseitin_solvability_by_charges(graph, m):
    for a in range(m):
        uniform = {v: a for v in graph.vertices}
        assert solve(tseitin_system(graph, uniform, m)) is not None
        for c in range(m):
            if c != a:
                assert solve(tseitin_system(graph, {**uniform, 0: c}, m)) is None


def test_non_bipartite_always_solvable_mod_three():
    g = complete_graph(4)
    for c in range(3):
        assert solve(tseitin_system(g, {0: c}, 3)) is not None


def test_perfect_matching():
    for g in (biclique(3), biclique_minus_matching(4), composite_graph(3, 4)):
        M = perfect_matching(g)
        covered = [v for e in M for v in g.edges[e]]
        assert sorted(covered) == list(g.vertices)
    with pytest.raises(ValueError):
        perfect_matching(complete_graph(4))


@pytest.mark.parametrize("graph", [c4(), biclique_minus_matching(3), composite_graph(3, 4)], ids=lambda g: g.name)
@pytest.mark.parametrize("m", [3, 4])
def test_near_solution(graph, m):
    for a in range(m):
        for c in range(m):
            charges = {**{v: a for v in graph.vertices}, 0: c}
            for vp in graph.vertices:
                lam = near_solution(graph, charges, m, vp)
                off = {v for v in graph.vertices if defect_at(graph, charges, m, lam, v)}
                assert off <= {vp}
                d = defect_at(graph, charges, m, lam, vp)
                assert d in {(a - c) % m, (c - a) % m}


def test_near_solution_base_cases():
    g = c4()
    lam = near_solution(g, {0: 2}, 4, 0)
    assert lam == [0, 0, 0, 0] and defect_at(g, {0: 2}, 4, lam, 0) == 2
    lam = near_solution(g, {0: 2}, 4, 1)
    assert defect_at(g, {0: 2}, 4, lam, 1) == 2
    with pytest.raises(ValueError):
        near_solution(complete_graph(4), {}, 3, 0)
    with pytest.raises(ValueError):
        near_solution(g, {0: 1, 1: 2}, 3, 0)
