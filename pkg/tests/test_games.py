from __future__ import annotations

import io

import numpy as np
import pytest

from polyquant.cfi import Variant, classify_permutation_z4, safe_vertices
from polyquant.games import (
    BPMemory,
    BPStrategy,
    BPVerifier,
    BudgetExceeded,
    Exhaustive,
    GameConfig,
    Interactive,
    MaltsevMemory,
    MaltsevStrategy,
    MaltsevVerifier,
    Position,
    Random,
    Scripted,
    Trace,
    bp_apply_round,
    check_invariant_bp,
    check_invariant_maltsev,
    duplicator_move_bp,
    duplicator_move_maltsev,
    duplicator_update_bp,
    explore_maltsev,
    game_instances,
    initial_memory_bp,
    initial_memory_maltsev,
    maltsev_validate_duplicator,
    play_game,
    reachable_states_bp,
    reachable_states_maltsev,
    replay,
    spoiler_wins_now,
    verify_one_round_bp,
    verify_one_round_maltsev,
)
from polyquant.graphs import biclique_minus_matching, composite_graph
from polyquant.structures import RelSymbol, Structure

BP_CFG = GameConfig("bijection", 3, 2)
M_CFG = GameConfig("maltsev", 3)


@pytest.fixture(scope="module")
def bp():
    S, T = game_instances(composite_graph(3, 7), Variant.parse("nu:3"))
    return S, T, BPStrategy(S, T)


@pytest.fixture(scope="module")
def bp_verifier(bp):
    S, T, st = bp
    return BPVerifier(S, T, BP_CFG, st)


@pytest.fixture(scope="module")
def mg():
    S, T = game_instances(biclique_minus_matching(3), Variant.parse("maltsev:3"))
    return S, T, MaltsevStrategy(S, T)


def test_config_validation():
    assert GameConfig("maltsev", 3).r == 3
    assert GameConfig("bijection", 3, 2).variables == ("x1", "x2", "x3")
    for args in (("chess", 3, 1), ("bijection", 0, 1), ("bijection", 3, 4)):
        with pytest.raises(ValueError):
            GameConfig(*args)
    with pytest.raises(ValueError):
        Position((1, None), (None, 2))


def test_spoiler_wins_now_and_rounds():
    E = [RelSymbol("E", 2)]
    A = Structure.build(E, range(3), {"E": [(0, 1)]})
    empty = Position.empty(2)
    assert not spoiler_wins_now(empty, A, A)
    ident = lambda x: x  # noqa: E731
    p = bp_apply_round(empty, ident, (0, 1), (0, 1))
    assert not spoiler_wins_now(p, A, A) and p.alpha == p.beta
    assert spoiler_wins_now(Position((0, 1), (0, 2)), A, A)
    assert spoiler_wins_now(Position((0, 0), (0, 1)), A, A)  # not a function
    q = bp_apply_round(p, ident, (0,), (2,))
    assert q.alpha == (2, 1) and q.dom == (0, 1)
    assert bp_apply_round(empty, ident, (1,), (2,)).dom == (1,)
    with pytest.raises(ValueError):
        bp_apply_round(empty, ident, (0, 1), (0, 1), r=1)
    with pytest.raises(ValueError):
        empty.update((0, 0), (1, 2), (1, 2))


def test_bp_initial_invariant(bp):
    S, T, _ = bp
    mem = initial_memory_bp(S, T)
    assert mem.u == 0 and check_invariant_bp(S, T, Position.empty(3), mem)
    assert duplicator_move_bp(mem, S, T) is mem.f


def test_bp_invariant_maintained_along_play(bp):
    S, T, st = bp
    for pos, mem in reachable_states_bp(S, T, 40, seed=3, strategy=st):
        assert check_invariant_bp(S, T, pos, mem)
        assert not spoiler_wins_now(pos, S.structure, T.structure)


def test_bp_unsafe_memory_fails_invariant(bp):
    S, T, _ = bp
    mem = initial_memory_bp(S, T)
    g = S.graph
    # a pebble in the bar vertex's own copy makes it unsafe
    pos = Position((S.vertex_atom(0, 0), None, None), (S.vertex_atom(0, 0), None, None))
    assert 0 not in safe_vertices(S, pos.atoms())
    assert not check_invariant_bp(S, T, pos, mem)
    wrong = BPMemory(S, mem.shifts, g.V - 1)
    assert not check_invariant_bp(S, T, Position.empty(3), wrong)


def test_bp_case1_on_empty_board(bp):
    S, T, st = bp
    mem = initial_memory_bp(S, T)
    pos = Position.empty(3).update((0,), (S.vertex_atom(30, 0),), (S.vertex_atom(30, 0),))
    new = duplicator_update_bp(mem, pos, st)
    assert check_invariant_bp(S, T, pos, new)
    safe = sorted(safe_vertices(S, pos.atoms()) - {0})
    assert new.u == safe[0]


def test_bp_case2_split(bp):
    _, _, st = bp
    assert st._split(1, 2, 3, [0]) == (2, 2)
    assert st._split(2, 2, 3, [0]) == (1, 1)
    assert st._split(1, 1, 2, [0]) is None


def test_bp_one_round_initial(bp, bp_verifier):
    S, T, _ = bp
    rep = verify_one_round_bp(S, T, Position.empty(3), initial_memory_bp(S, T), verifier=bp_verifier)
    assert rep.exhaustive and rep.total_moves == 3 * 840 + 6 * 840**2
    assert rep.checked == rep.total_moves and rep.violations == 0 and rep.extra["precondition"]


def test_bp_one_round_reachable(bp, bp_verifier):
    S, T, st = bp
    for pos, mem in reachable_states_bp(S, T, 3, seed=11, strategy=st):
        rep = bp_verifier.verify(pos, mem)
        assert rep.violations == 0, rep.examples


def test_bp_sampled_when_over_budget(bp, bp_verifier):
    S, T, _ = bp
    rep = bp_verifier.verify(Position.empty(3), initial_memory_bp(S, T), budget=5000, seed=1)
    assert not rep.exhaustive and rep.checked == 5000 and rep.violations == 0


def test_bp_wrong_bar_is_caught(bp, bp_verifier):
    S, T, _ = bp
    mem = initial_memory_bp(S, T)
    wrong = BPMemory(S, mem.shifts, 17)
    rep = bp_verifier.verify(Position.empty(3), wrong, budget=5000, seed=2)
    assert not rep.extra["precondition"] and rep.violations > 0


def test_bp_fast_path_matches_strategy(bp, bp_verifier):
    S, T, st = bp
    ver = bp_verifier
    rng = np.random.default_rng(4)
    for pos, mem in reachable_states_bp(S, T, 10, seed=5, strategy=st):
        u, d = mem.u, st.defect(mem)
        for _ in range(30):
            s = int(rng.integers(1, 3))
            ys = tuple(int(y) for y in rng.permutation(3)[:s])
            atoms = [int(x) for x in rng.integers(0, S.n_atoms, size=s)]
            new = pos.update(ys, atoms, [mem.f(a) for a in atoms])
            L = frozenset(int(S.atom_loc[a]) for a in new.atoms())
            kept = frozenset(int(S.atom_loc[new.alpha[i]]) for i in range(3) if i not in ys and new.alpha[i] is not None)
            dirty = 0
            for l in L:
                dirty |= st.loc_mask[l]
            ucode = sum(1 << j for j, l in enumerate(st.class_locs(u)) if l in L)
            v = int(ver.first_safe(u)[dirty])
            fast = ver.resolve(u, d, kept, L, v, ver.zero_positions(ucode))
            assert fast == st._respond(u, d, L)


def test_bp_slow_reference_rounds(bp):
    S, T, _ = bp
    st = BPStrategy(S, T)  # fresh, no shared memo
    rng = np.random.default_rng(9)
    for pos, mem in reachable_states_bp(S, T, 5, seed=8, strategy=st):
        for _ in range(20):
            s = int(rng.integers(1, 3))
            ys = tuple(int(y) for y in rng.permutation(3)[:s])
            atoms = [int(x) for x in rng.integers(0, S.n_atoms, size=s)]
            f = duplicator_move_bp(mem)
            new = bp_apply_round(pos, f, ys, atoms, r=2)
            assert not spoiler_wins_now(new, S.structure, T.structure)
            assert check_invariant_bp(S, T, new, duplicator_update_bp(mem, new, st))


# -- Maltsev game -------------------------------------------------------------


def test_validate_duplicator():
    assert maltsev_validate_duplicator((1, 2), [(1, 2)])
    assert maltsev_validate_duplicator((1, 0), [(0, 0), (0, 1), (1, 1)])
    assert not maltsev_validate_duplicator((1, 1), [(0, 0)])
    with pytest.raises(ValueError):
        maltsev_validate_duplicator((0,), [(0,), (1,), (2,), (3,)])


def test_maltsev_initial_invariant(mg):
    S, T, _ = mg
    mem = initial_memory_maltsev(S, T)
    assert mem.mode == "rotation" and mem.w == 0
    assert check_invariant_maltsev(S, T, Position.empty(3), mem)
    e = S.graph.inc[0][0]
    shifts = mem.shifts.copy()
    shifts[e] = 1
    assert not check_invariant_maltsev(S, T, Position.empty(3), MaltsevMemory(S, "rotation", shifts, 0))
    with pytest.raises(ValueError):
        MaltsevMemory(S, "shear", shifts, 0)


def test_maltsev_case1_singleton(mg):
    S, T, st = mg
    mem = initial_memory_maltsev(S, T)
    far = next(e for e in range(S.graph.E) if 0 not in S.graph.edges[e])
    P, mems = duplicator_move_maltsev(mem, Position.empty(3), "right", 3, (0,), [far * 4 + 1], st)
    assert P == [(mem.f(far * 4 + 1),)] and len(mems) == 1
    with pytest.raises(ValueError):
        duplicator_move_maltsev(mem, Position.empty(3), "right", 1, (0, 1), [0, 4], st)


def test_maltsev_case2_mode_inversion(mg):
    S, T, st = mg
    mem = initial_memory_maltsev(S, T)
    g = S.graph
    atoms = [e * 4 for e in g.inc[0]]
    P, mems = st.move(mem, Position.empty(3), "right", (0, 1, 2), atoms)
    assert len(P) == 3 and maltsev_validate_duplicator([mem.f(a) for a in atoms], P)
    for pick in (0, 2):
        new = mems[pick]
        assert new.mode == "reflection"
        assert all(classify_permutation_z4(new.f.edge_permutation(e))[0] == "reflection" for e in g.inc[0])
        assert all(new.f(a) == b for a, b in zip(atoms, P[pick]))
    assert mems[1].mode == "rotation"
    for b, m in zip(P, mems):
        pos = Position.empty(3).update((0, 1, 2), atoms, b)
        assert check_invariant_maltsev(S, T, pos, m)


def test_maltsev_one_round_initial(mg):
    S, T, _ = mg
    rep = verify_one_round_maltsev(S, T, Position.empty(3), initial_memory_maltsev(S, T))
    assert rep.violations == 0 and rep.extra["precondition"] and rep.extra["max_P"] <= 3
    with pytest.raises(BudgetExceeded):
        verify_one_round_maltsev(S, T, Position.empty(3), initial_memory_maltsev(S, T), budget=1000)


def test_maltsev_one_round_reachable(mg):
    S, T, st = mg
    ver = MaltsevVerifier(S, T, M_CFG, st)
    for pos, mem in reachable_states_maltsev(S, T, 3, seed=2, strategy=st):
        assert check_invariant_maltsev(S, T, pos, mem)
        rep = ver.verify(pos, mem)
        assert rep.violations == 0, rep.examples


class BadOffer(MaltsevStrategy):
    def move(self, mem, pos, side, ys, atoms):
        P, mems = super().move(mem, pos, side, ys, atoms)
        if len(P) == 3:
            P = [tuple((a // 4) * 4 + (a + 1) % 4 for a in P[1])] * 3
        return P, mems


class NoRepair(MaltsevStrategy):
    def case1(self, mem, F):
        return mem


def test_maltsev_sabotaged_strategies_are_caught(mg):
    S, T, _ = mg
    mem = initial_memory_maltsev(S, T)
    for cls in (BadOffer, NoRepair):
        ver = MaltsevVerifier(S, T, M_CFG, cls(S, T))
        assert ver.verify(Position.empty(3), mem).violations > 0


def test_maltsev_depth_one_tree(mg):
    S, T, st = mg
    rep = explore_maltsev(S, T, 1, MaltsevVerifier(S, T, M_CFG, st))
    assert rep.violations == 0 and rep.extra["depth"] == 1


# -- whole games ------------------------------------------------------------


@pytest.mark.parametrize("which", ["bp", "mg"])
def test_random_play_and_replay(which, request, tmp_path):
    S, T, st = request.getfixturevalue(which)
    cfg = BP_CFG if which == "bp" else M_CFG
    trace = play_game(cfg, S, T, Random(seed=1, rounds=60), st)
    assert trace.survived and len(trace.rounds) == 60
    assert all(r["conformant"] and not r["spoiler_wins"] for r in trace.rounds)
    path = tmp_path / "t.jsonl"
    trace.write(str(path))
    again = Trace.read(str(path))
    ok, diffs = replay(again)
    assert ok, diffs
    assert play_game(cfg, S, T, Random(seed=1, rounds=60)).dumps() == trace.dumps()


def test_tampered_trace_fails_replay(mg):
    S, T, st = mg
    trace = play_game(M_CFG, S, T, Random(seed=2, rounds=10), st)
    lines = trace.dumps().splitlines()
    lines[3] = lines[3].replace('"pick":0', '"pick":1') if '"pick":0' in lines[3] else lines[3].replace('"spoiler_wins":false', '"spoiler_wins":true')
    ok, diffs = replay(Trace.loads("\n".join(lines)))
    assert not ok and diffs
    with pytest.raises(ValueError):
        Trace.loads('{"x":1}')


def test_exhaustive_spoiler_limits(bp, mg):
    S, T, st = bp
    assert play_game(BP_CFG, S, T, Exhaustive(0)).survived
    with pytest.raises(BudgetExceeded):
        play_game(BP_CFG, S, T, Exhaustive(2))
    S4, T4, st4 = mg
    with pytest.raises(BudgetExceeded):
        play_game(M_CFG, S4, T4, Exhaustive(3), st4)
    with pytest.raises(ValueError):
        play_game(BP_CFG, S4, T4, Random())


def test_scripted_game(mg):
    S, T, st = mg
    g = S.graph
    moves = (("right", (0, 1, 2), [e * 4 for e in g.inc[0]], 1), ("left", (0,), [5], 0))
    trace = play_game(M_CFG, S, T, Scripted(moves), st)
    assert trace.survived and trace.rounds[0]["pick"] == 1
    assert replay(trace)[0]


def test_interactive_game(mg):
    S, T, st = mg
    name = S.atom_name(5)
    script = f"bogus\nright x1 = nope\natoms\nright x1 = {name}\n\nleft x1,x2 = {S.atom_name(9)},{S.atom_name(40)}\nquit\n"
    out = io.StringIO()
    trace = play_game(M_CFG, S, T, Interactive(io.StringIO(script), out), st)
    text = out.getvalue()
    assert "invalid move" in text and "unknown atom" in text
    assert trace.survived and len(trace.rounds) == 2
