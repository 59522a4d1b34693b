"""Command-line front door: construct, verify, export and play.

Exit codes: 0 success, 1 property violation, 2 usage error, 3 budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .cfi import Variant, build_cfi, cfi_from_json, projection_map, tseitin_solvable
from .csp import BudgetExhausted, HomSearchConfig, SearchStats, find_homomorphism
from .games.core import BudgetExceeded, GameConfig, NoSafeEscape, Position
from .graphs import BaseGraph, biclique, biclique_minus_matching, complete_graph, composite_graph, edge_connectivity, toroidal_grid
from .partial_poly import MALTSEV, NU, IntervalDivision, close_structure, default_division, full_reduction
from .structures import Structure, is_homomorphism
from .templates import TemplateSpec, template_nu
from .verify import LEMMAS, Options, run_lemma

OK, VIOLATION, USAGE, BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _emit(obj, out: str | None = None) -> None:
    text = json.dumps(obj, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(path: str) -> dict:
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _ints(values: Sequence[str] | None) -> list[int]:
    out = []
    for v in values or []:
        for part in str(v).split(","):
            if part:
                try:
                    out.append(int(part))
                except ValueError:
                    raise UsageError(f"expected integers, got {part!r}") from None
    return out


# -- construction verbs ---------------------------------------------------


GRAPHS = {
    "torus": lambda ps: toroidal_grid(ps[0], ps[1:]),
    "composite": lambda ps: composite_graph(*ps),
    "biclique-minus-matching": lambda ps: biclique_minus_matching(*ps),
    "biclique": lambda ps: biclique(*ps),
    "complete": lambda ps: complete_graph(*ps),
}


def cmd_template(args) -> int:
    spec = TemplateSpec(args.kind, tuple(_ints(args.params)))
    _emit(spec.build().to_json(), args.out)
    return OK


def cmd_graph(args) -> int:
    ps = _ints(args.params)
    try:
        g = GRAPHS[args.kind](ps)
    except TypeError:
        raise UsageError(f"wrong number of parameters for {args.kind}") from None
    data = g.to_json()
    if args.connectivity:
        data["edge_connectivity"] = edge_connectivity(g)
    _emit(data, args.out)
    return OK


def cmd_instance(args) -> int:
    graph = BaseGraph.from_json(_load(args.graph))
    variant = Variant.parse(args.variant)
    S = build_cfi(graph, (0,) if args.twist else (), variant)
    _emit(S.to_json(), args.out)
    return OK


def cmd_csp(args) -> int:
    data = _load(args.instance)
    A = Structure.from_json({k: v for k, v in data.items() if k != "roles"})
    B = Structure.from_json(_load(args.template))
    cfg = HomSearchConfig(node_budget=args.budget, time_limit=args.time_limit)
    stats = SearchStats()
    out: dict = {"instance_size": len(A), "template_size": len(B), "node_budget": args.budget}
    try:
        h = find_homomorphism(A, B, cfg, stats)
        solver = "SAT" if h is not None else "UNSAT"
    except BudgetExhausted as exc:
        h, solver = None, "budget exhausted"
        out["solver_stop"] = exc.reason
    out["solver"] = solver
    out["nodes"] = stats.nodes
    status = OK
    if h is not None:
        if not is_homomorphism(A, B, h):
            out["witness_check"] = "failed"
            status = VIOLATION
        else:
            out["witness_check"] = "passed"
        out["witness"] = {A.label(x): B.label(y) for x, y in sorted(h.items())}

    oracle = None
    if "roles" in data:
        S = cfi_from_json(data)
        if S.variant.kind == "nu" and B.to_json() == template_nu(S.variant.ell).to_json():
            if not S.U:
                ok = is_homomorphism(A, B, projection_map(S))
                out["projection"] = "verified" if ok else "failed"
                if not ok:
                    status = VIOLATION
            if S.graph.side is not None:
                oracle = "SAT" if tseitin_solvable(S) else "UNSAT"
                out["oracle"] = oracle
    if oracle is not None:
        out["verdict"] = oracle
        if solver in ("SAT", "UNSAT"):
            out["agreement"] = solver == oracle
            if solver != oracle:
                status = VIOLATION
    elif solver in ("SAT", "UNSAT"):
        out["verdict"] = solver
    else:
        out["verdict"] = "unknown"
        status = max(status, BUDGET)
    _emit(out, args.out)
    return status


def cmd_close(args) -> int:
    A = Structure.from_json(_load(args.structure))
    fam = args.family
    if fam == "maltsev":
        p = MALTSEV
    elif fam.startswith("nu:"):
        p = NU(_ints([fam[3:]])[0])
    else:
        raise UsageError(f"unknown family {fam!r}; use nu:ELL or maltsev")
    _emit(close_structure(p, A).to_json(), args.out)
    return OK


def _division(text: str) -> IntervalDivision:
    pairs = []
    for part in text.split(","):
        i, sep, j = part.partition("-")
        try:
            pairs.append((int(i), int(j if sep else i)))
        except ValueError:
            raise UsageError(f"bad interval {part!r}; write divisions like 1-2,3-4,5") from None
    return IntervalDivision.of(pairs)


def cmd_reduce(args) -> int:
    A = Structure.from_json(_load(args.structure))
    div = _division(args.division) if args.division else default_division(A.max_arity, args.ell)
    if len(div) != args.ell:
        raise UsageError(f"the division needs {args.ell} intervals")
    out = full_reduction(A, args.ell, div).to_json()
    out["division"] = div.to_json()
    _emit(out, args.out)
    return OK


def cmd_verify(args) -> int:
    text = args.lemma
    if args.params:
        text += ":" + ",".join(str(p) for p in _ints(args.params))
    opts = Options(seed=args.seed, budget=args.budget, count=args.count, states=args.states)
    rep = run_lemma(text, opts)
    _note(f"{rep['lemma']}: {rep['checked']} checked, {rep['violations']} violations in {rep.pop('seconds')} s")
    rep["seed"] = args.seed
    _emit(rep, args.out)
    return VIOLATION if rep["violations"] else OK


# -- games ----------------------------------------------------------------


def _game_setup(args):
    from .games.play import game_instances

    if args.game == "bijection":
        config = GameConfig("bijection", args.k, args.r or 2)
        default_graph, default_variant = (lambda: composite_graph(3, 7)), "nu:3"
    else:
        config = GameConfig("maltsev", args.k, args.r or args.k)
        default_graph, default_variant = (lambda: biclique_minus_matching(args.k)), f"maltsev:{args.k}"
    graph = BaseGraph.from_json(_load(args.graph)) if args.graph else default_graph()
    S, T = game_instances(graph, Variant.parse(args.variant or default_variant))
    return config, S, T


def cmd_game_run(args) -> int:
    from .games.play import Exhaustive, Random, play_game

    config, S, T = _game_setup(args)
    if args.spoiler == "random":
        spoiler = Random(args.seed, args.rounds)
    else:
        spoiler = Exhaustive(args.depth, args.budget)
    trace = play_game(config, S, T, spoiler)
    if args.out:
        trace.write(args.out)
    else:
        sys.stdout.write(trace.dumps())
    _note(trace.result["result"])
    return OK if trace.survived else VIOLATION


def cmd_game_verify_round(args) -> int:
    from .games.bijection import BPVerifier, initial_memory_bp, reachable_states_bp
    from .games.maltsev import MaltsevVerifier, initial_memory_maltsev, reachable_states_maltsev

    config, S, T = _game_setup(args)
    if config.kind == "bijection":
        ver = BPVerifier(S, T, config)
        states = [(Position.empty(config.k), initial_memory_bp(S, T))]
        states += reachable_states_bp(S, T, args.states, args.seed, config, ver.strategy)
        run = lambda pos, mem: ver.verify(pos, mem, args.budget, args.seed)  # noqa: E731
    else:
        ver = MaltsevVerifier(S, T, config)
        states = [(Position.empty(config.k), initial_memory_maltsev(S, T))]
        states += reachable_states_maltsev(S, T, args.states, args.seed, ver.strategy)
        run = lambda pos, mem: ver.verify(pos, mem)  # noqa: E731
    reports = []
    total = {"states": len(states), "checked": 0, "violations": 0, "exhaustive": True}
    for i, (pos, mem) in enumerate(states):
        rep = run(pos, mem)
        row = {k: v for k, v in rep.to_json().items() if k != "name"}
        row["state"] = i
        reports.append(row)
        total["checked"] += rep.checked
        total["violations"] += rep.violations
        total["exhaustive"] &= rep.exhaustive
    total["coverage"] = "exhaustive" if total.pop("exhaustive") else "sampled"
    _note(f"{total['states']} states, {total['checked']} moves checked, {total['violations']} violations")
    _emit({"game": config.to_json(), "seed": args.seed, "summary": total, "reports": reports}, args.out)
    return VIOLATION if total["violations"] else OK


def cmd_game_replay(args) -> int:
    from .games.play import Trace, replay

    try:
        trace = Trace.read(args.trace)
    except OSError as exc:
        raise UsageError(f"cannot read {args.trace}: {exc.strerror}") from None
    ok, diffs = replay(trace)
    _emit({"identical": ok, "differences": diffs, "result": trace.result.get("result")}, args.out)
    return OK if ok else VIOLATION


def cmd_game_play(args) -> int:
    from .games.play import Interactive, play_game

    config, S, T = _game_setup(args)
    trace = play_game(config, S, T, Interactive(rounds=args.rounds))
    if args.out:
        trace.write(args.out)
    print(trace.result["result"])
    return OK


# -- parser ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyquant", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--out", help="write JSON here instead of stdout")
        return sp

    sp = verb("template", cmd_template, "build a CSP template")
    sp.add_argument("--kind", required=True, choices=sorted(TemplateSpec.BUILDERS))
    sp.add_argument("--params", nargs="+", required=True)

    sp = verb("graph", cmd_graph, "build a base graph")
    sp.add_argument("--kind", required=True, choices=sorted(GRAPHS))
    sp.add_argument("--params", nargs="+", required=True)
    sp.add_argument("--connectivity", action="store_true", help="add the edge connectivity")

    sp = verb("instance", cmd_instance, "build a CFI instance over a graph")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--variant", required=True, help="nu:ELL, nu-star:R,ELL or maltsev:K")
    sp.add_argument("--twist", action="store_true", help="charge the first vertex")

    sp = verb("csp", cmd_csp, "decide whether an instance maps to a template")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--template", required=True)
    sp.add_argument("--budget", type=int, default=10**7, help="search node budget")
    sp.add_argument("--time-limit", type=float, default=None, help="search time limit in seconds")

    sp = verb("close", cmd_close, "close a structure under a partial operation")
    sp.add_argument("--structure", required=True)
    sp.add_argument("--family", required=True, help="nu:ELL or maltsev")

    sp = verb("reduce", cmd_reduce, "apply the closure and star reduction")
    sp.add_argument("--structure", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--division", help="intervals such as 1-2,3-4,5")

    sp = verb("verify", cmd_verify, "run a lemma verifier")
    sp.add_argument("--lemma", required=True, help="one of: " + ", ".join(LEMMAS))
    sp.add_argument("--params", nargs="+")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, default=5_000_000)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--states", type=int, default=20)

    gp = sub.add_parser("game", help="play or verify the bijection and Maltsev games")
    gsub = gp.add_subparsers(dest="action", required=True)

    def game(name, fn, help_):
        sp = gsub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--out")
        if name != "replay":
            sp.add_argument("--game", choices=("bijection", "maltsev"), default="bijection")
            sp.add_argument("--graph", help="base graph JSON (default: the acceptance graph)")
            sp.add_argument("--variant")
            sp.add_argument("--k", type=int, default=3)
            sp.add_argument("--r", type=int, default=0)
        return sp

    sp = game("run", cmd_game_run, "play a game against a machine Spoiler and write the trace")
    sp.add_argument("--spoiler", choices=("random", "exhaustive"), default="random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rounds", type=int, default=200)
    sp.add_argument("--depth", type=int, default=1)
    sp.add_argument("--budget", type=int, default=200_000_000)

    sp = game("verify-round", cmd_game_verify_round, "check Duplicator's one-round strategy from reachable states")
    sp.add_argument("--states", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int, default=5_000_000)

    sp = game("replay", cmd_game_replay, "re-simulate a trace and compare it")
    sp.add_argument("trace")

    sp = game("play", cmd_game_play, "play as Spoiler at the terminal")
    sp.add_argument("--rounds", type=int, default=None)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.fn(args)
    except UsageError as exc:
        _note(f"error: {exc}")
        return USAGE
    except (BudgetExceeded, BudgetExhausted) as exc:
        _note(f"budget exhausted: {exc}")
        return BUDGET
    except NoSafeEscape as exc:
        _note(f"strategy failed: {exc}")
        return VIOLATION
    except (ValueError, KeyError) as exc:
        _note(f"error: {exc}")
        return USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
