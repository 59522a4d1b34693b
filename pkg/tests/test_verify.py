from __future__ import annotations

import json

import pytest

from polyquant.verify import LEMMAS, Options, parse_lemma, run_lemma

SMALL = Options(seed=1, count=5, states=1, budget=10**6)

CHEAP = [
    "base-separating",
    "separating:3",
    "row-back:3",
    "pairs:3,3",
    "poly-closed:3",
    "arity-trick",
    "csp-reduction",
    "hypergraph-reduction",
    "tseitin",
    "near-solution",
    "comp-isom:3",
    "local-isom",
    "z4-permutations",
    "bp-invariant:7",
]


@pytest.mark.parametrize("lemma", CHEAP)
def test_lemma_reports_no_violations(lemma):
    rep = run_lemma(lemma, SMALL)
    assert rep["violations"] == 0 and rep["examples"] == []
    assert rep["checked"] > 0 and rep["coverage"] in {"exhaustive", "sampled"}
    assert rep["lemma"].split(":")[0] == lemma.split(":")[0]
    json.dumps(rep)


def test_sampled_lemmas_are_seeded():
    a = run_lemma("csp-reduction", Options(seed=4, count=10))
    b = run_lemma("csp-reduction", Options(seed=4, count=10))
    a.pop("seconds"), b.pop("seconds")
    assert a == b and a["seed"] == 4


def test_non_isomorphism_report():
    rep = run_lemma("non-isomorphism", SMALL)
    assert rep["violations"] == 0 and rep["isomorphism"] == "absent"
    assert set(rep["tseitin"].values()) == {"unsolvable"}


def test_parse_lemma():
    lm, params = parse_lemma("pairs:4,4")
    assert lm.name == "pairs" and params == (4, 4)
    assert parse_lemma("comp-isom")[1] == (3,)
    assert set(LEMMAS) >= {"separating", "bp-invariant", "maltsev-invariant"}


@pytest.mark.parametrize("text", ["nope", "pairs:3", "separating:x", "tseitin:1"])
def test_parse_lemma_errors(text):
    with pytest.raises(ValueError):
        parse_lemma(text)
