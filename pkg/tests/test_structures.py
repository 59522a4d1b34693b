from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings

from polyquant.csp import find_homomorphism
from polyquant.structures import (
    RelSymbol,
    Structure,
    VocabularyMismatch,
    compute_core,
    dump_structure,
    find_isomorphism,
    induced,
    is_homomorphism,
    is_partial_isomorphism,
    leq,
    load_structure,
    union,
)
from polyquant.templates import clique
from strategies import structures


def graph(n, edges):
    sym = [RelSymbol("E", 2)]
    return Structure.build(sym, range(n), {"E": edges + [(b, a) for a, b in edges]})


def test_build_rejects_bad_tuples():
    with pytest.raises(ValueError):
        Structure.build([RelSymbol("E", 2)], range(2), {"E": [(0, 5)]})
    with pytest.raises(ValueError):
        Structure.build([RelSymbol("E", 2)], range(2), {"E": [(0,)]})
    with pytest.raises(ValueError):
        RelSymbol("E", -1)


def test_nullary_symbols_are_allowed():
    S = Structure.build([RelSymbol("Z", 0)], range(2), {"Z": [()]})
    assert S.relations["Z"] == frozenset({()})


@given(structures())
def test_json_round_trip(S):
    assert Structure.from_json(json.loads(json.dumps(S.to_json()))) == S


def test_json_labels_round_trip(tmp_path):
    S = Structure.build([RelSymbol("E", 2)], range(2), {"E": [(0, 1)]}, {0: "a", 1: "b"})
    data = S.to_json()
    assert data["universe"] == ["a", "b"] and data["relations"]["E"] == [["a", "b"]]
    path = tmp_path / "s.json"
    dump_structure(S, str(path))
    back = load_structure(str(path))
    assert back.to_json() == data


def test_from_json_rejects_unknown_element():
    with pytest.raises(ValueError):
        Structure.from_json({"vocab": [{"name": "E", "arity": 2}], "universe": ["a"], "relations": {"E": [["a", "b"]]}})


def test_leq_union_induced():
    A = graph(3, [(0, 1)])
    B = graph(3, [(1, 2)])
    U = union(A, B)
    assert leq(A, U) and leq(B, U) and not leq(U, A)
    sub = induced(U, [0, 1])
    assert sub.universe == (0, 1) and sub.relations["E"] == {(0, 1), (1, 0)}
    with pytest.raises(ValueError):
        induced(U, [7])
    with pytest.raises(VocabularyMismatch):
        leq(A, clique(3).with_relations({"R": []}))


def test_partial_isomorphism_basics():
    A = graph(3, [(0, 1)])
    assert is_partial_isomorphism(A, A, {0: 1, 1: 0})
    assert not is_partial_isomorphism(A, A, {0: 0, 1: 2})
    assert not is_partial_isomorphism(A, A, {0: 1, 2: 1})  # not injective
    assert is_partial_isomorphism(A, A, {})


def brute_isomorphic(A, B) -> bool:
    if len(A.universe) != len(B.universe):
        return False
    for perm in itertools.permutations(B.universe):
        h = dict(zip(A.universe, perm))
        if all({tuple(h[x] for x in t) for t in A.relations[s.name]} == B.relations[s.name] for s in A.vocab):
            return True
    return False


@settings(max_examples=80, deadline=None)
@given(structures(max_size=4), structures(max_size=4))
def test_find_isomorphism_matches_permutation_search(A, B):
    iso = find_isomorphism(A, B)
    assert (iso is not None) == brute_isomorphic(A, B)
    if iso is not None:
        assert is_partial_isomorphism(A, B, iso) and len(iso) == len(A.universe)


def test_find_isomorphism_respects_classes():
    A = graph(4, [(0, 1), (2, 3)])
    assert find_isomorphism(A, A, ([[0, 1], [2, 3]], [[2, 3], [0, 1]])) is not None
    assert find_isomorphism(A, A, ([[0, 2], [1, 3]], [[0, 1], [2, 3]])) is None


def test_core_of_even_cycle_is_an_edge():
    C6 = graph(6, [(i, (i + 1) % 6) for i in range(6)])
    core = compute_core(C6)
    assert len(core.universe) == 2


def test_core_of_clique_is_itself():
    assert len(compute_core(clique(3)).universe) == 3


@settings(max_examples=40, deadline=None)
@given(structures(max_size=4))
def test_core_is_hom_equivalent_and_minimal(A):
    C = compute_core(A)
    assert set(C.universe) <= set(A.universe)
    assert find_homomorphism(A, C) is not None and find_homomorphism(C, A) is not None
    assert len(compute_core(C).universe) == len(C.universe)
    h = find_homomorphism(C, C)
    assert is_homomorphism(C, C, h)
