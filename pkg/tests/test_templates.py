from __future__ import annotations

import itertools
import math

import pytest

from polyquant.partial_poly import NU, is_partial_polymorphism
from polyquant.templates import (
    TemplateSpec,
    clique,
    parity_template,
    star_arity_bound,
    template_nu,
    template_nu_star,
    uniform_hypergraph,
    u_vector,
)


def test_template_nu_examples():
    B = template_nu(3)
    assert (0, 0, 0, 0) in B.relations["R0"]
    assert (1, 1, 1, 0) in B.relations["R0"]
    assert B.universe == (0, 1, 2)
    for ell in (3, 4):
        B = template_nu(ell)
        for j in range(3):
            assert len(B.relations[f"R{j}"]) == 3 ** (ell - 1)
    with pytest.raises(ValueError):
        template_nu(2)


def test_template_nu_rows_follow_formula():
    B = template_nu(4)
    u = u_vector(4)
    for j in range(3):
        for t in B.relations[f"R{j}"]:
            assert sum(t[:-1]) % 3 == j
            assert t[-1] == sum(a * b for a, b in zip(t, u)) % 3


def test_template_nu_star():
    B = template_nu_star(3, 3)
    assert B.max_arity == 25 <= star_arity_bound(3, 3) == 35
    assert (0,) * 25 in B.relations["R0"]
    assert sum(len(B.relations[f"R{j}"]) for j in range(3)) == 3**7
    with pytest.raises(ValueError):
        template_nu_star(3, 4)


def test_uniform_hypergraph():
    H = uniform_hypergraph(3, 4)
    assert len(H.relations["R"]) == math.perm(4, 3) == 24
    H3 = uniform_hypergraph(3, 3)
    assert (1, 2, 3) in H3.relations["R"] and (1, 1, 2) not in H3.relations["R"]
    assert clique(4) == uniform_hypergraph(2, 4)
    assert not uniform_hypergraph(3, 2).relations["R"]
    with pytest.raises(ValueError):
        uniform_hypergraph(1, 3)


@pytest.mark.parametrize("r", [3, 4])
def test_parity_template_sizes(r):
    P = parity_template(r)
    assert len(P.relations["R0"]) == len(P.relations["R1"]) == 2 ** (r - 1)
    assert (0,) * r in P.relations["R0"]
    assert (1, 1, 0) + (0,) * (r - 3) in P.relations["R0"]
    with pytest.raises(ValueError):
        parity_template(2)


@pytest.mark.parametrize("r", [3, 4, 5])
def test_parity_template_has_maltsev_polymorphism(r):
    P = parity_template(r)
    for name in ("R0", "R1"):
        R = P.relations[name]
        for a, b, c in itertools.product(R, repeat=3):
            assert tuple((x - y + z) % 2 for x, y, z in zip(a, b, c)) in R


@pytest.mark.parametrize("ell", [3, 4])
def test_template_nu_closed(ell):
    assert is_partial_polymorphism(NU(ell), template_nu(ell))


def test_spec_parse_and_arity():
    for text, arity in [("nu:3", 4), ("nu-star:3,3", 25), ("hypergraph:3,4", 3), ("clique:3", 2), ("parity:4", 4)]:
        spec = TemplateSpec.parse(text)
        assert spec.arity == spec.build().max_arity == arity
    for bad in ("nu", "nu:3,3", "cube:3", "nu:2"):
        with pytest.raises(ValueError):
            TemplateSpec.parse(bad).build()
