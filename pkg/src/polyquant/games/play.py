"""Driving whole games: Spoiler policies, JSON-lines traces and replay."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterator, TextIO

import numpy as np

from ..cfi import CFIStructure, Variant, build_cfi
from ..graphs import BaseGraph
from .bijection import BPStrategy, BPVerifier, initial_memory_bp
from .core import BudgetExceeded, GameConfig, NoSafeEscape, PartialIsoChecker, Position, move_count, spoiler_wins_now, variable_tuples
from .maltsev import SIDES, MaltsevStrategy, MaltsevVerifier, explore_maltsev, initial_memory_maltsev, maltsev_validate_duplicator


@dataclass(frozen=True)
class Random:
    seed: int = 0
    rounds: int = 200


@dataclass(frozen=True)
class Exhaustive:
    depth: int
    budget: int = 200_000_000


@dataclass
class Interactive:
    stdin: TextIO = field(default_factory=lambda: sys.stdin)
    stdout: TextIO = field(default_factory=lambda: sys.stdout)
    rounds: int | None = None


@dataclass(frozen=True)
class Scripted:
    """Replays recorded Spoiler moves: (side, ys, atoms, pick) per round."""

    moves: tuple


@dataclass
class Trace:
    header: dict
    rounds: list[dict] = field(default_factory=list)
    result: dict = field(default_factory=dict)

    @property
    def survived(self) -> bool:
        return bool(self.result.get("survived"))

    def lines(self) -> list[str]:
        out = [self.header] + self.rounds + [self.result]
        return [json.dumps(x, sort_keys=True, separators=(",", ":")) for x in out]

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Trace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if len(rows) < 2 or "config" not in rows[0] or "result" not in rows[-1]:
            raise ValueError("not a game trace")
        return cls(rows[0], rows[1:-1], rows[-1])

    @classmethod
    def read(cls, path: str) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


# -- game setup -------------------------------------------------------------


def game_instances(graph: BaseGraph, variant: Variant) -> tuple[CFIStructure, CFIStructure]:
    """Untwisted and twisted (at the first vertex) instances over the graph."""
    return build_cfi(graph, (), variant), build_cfi(graph, (0,), variant)


def _header(config: GameConfig, S: CFIStructure, T: CFIStructure, spoiler) -> dict:
    if isinstance(spoiler, Random):
        sp = {"kind": "random", "seed": spoiler.seed, "rounds": spoiler.rounds}
    elif isinstance(spoiler, Exhaustive):
        sp = {"kind": "exhaustive", "depth": spoiler.depth}
    elif isinstance(spoiler, Scripted):
        sp = {"kind": "scripted", "rounds": len(spoiler.moves)}
    else:
        sp = {"kind": "interactive"}
    return {
        "config": config.to_json(),
        "variant": str(S.variant),
        "graph": S.graph.to_json(),
        "twist": sorted(S.graph.labels[v] for v in T.U),
        "digests": {"left": S.structure.digest(), "right": T.structure.digest()},
        "spoiler": sp,
    }


def _names(S: CFIStructure, atoms) -> list[str]:
    return [S.atom_name(int(x)) for x in atoms]


class _Engine:
    """One game in progress: position, memory and the per-round bookkeeping."""

    def __init__(self, config: GameConfig, S: CFIStructure, T: CFIStructure, strategy=None):
        self.config, self.S, self.T = config, S, T
        self.checker = PartialIsoChecker(S.structure, T.structure, config.k)
        self.pos = Position.empty(config.k)
        if config.kind == "bijection":
            self.st = strategy or BPStrategy(S, T)
            self.mem = initial_memory_bp(S, T)
        else:
            self.st = strategy or MaltsevStrategy(S, T)
            self.mem = initial_memory_maltsev(S, T)
        self.by_name = {S.atom_name(x): x for x in S.structure.universe}

    def offer(self, side: str, ys, atoms) -> list[tuple[int, ...]] | None:
        """Duplicator's tuple set P (Maltsev game), or None in the bijection game."""
        if self.config.kind == "bijection":
            return None
        P, self._pending = self.st.move(self.mem, self.pos, side, ys, atoms)
        return P

    def play(self, side: str, ys, atoms, P, pick: int) -> dict:
        S, cfg = self.S, self.config
        row: dict = {"ys": [cfg.variables[y] for y in ys], "a": _names(S, atoms)}
        conformance = True
        if cfg.kind == "bijection":
            f = self.mem.f
            conformance = f.is_edge_preserving() and len(set(f.images.tolist())) == len(f.images)
            b = [f(x) for x in atoms]
            self.pos = self.pos.update(ys, atoms, b)
            self.mem = self.st.update(self.mem, self.pos)
            row.update(b=_names(S, b), u=S.graph.labels[self.mem.u])
        else:
            h = self.mem.f if side == "right" else self.mem.f_inv
            image = [h(x) for x in atoms]
            conformance = maltsev_validate_duplicator(image, P)
            b = list(P[pick])
            self.pos = self.pos.update(ys, atoms, b) if side == "right" else self.pos.update(ys, b, atoms)
            self.mem = self._pending[pick]
            row.update(side=side, P=[_names(S, p) for p in P], pick=pick, b=_names(S, b))
            row.update(w=S.graph.labels[self.mem.w], mode=self.mem.mode)
        row["conformant"] = bool(conformance)
        row["spoiler_wins"] = spoiler_wins_now(self.pos, S.structure, self.T.structure, self.checker)
        return row


def _random_moves(config: GameConfig, n: int, spoiler: Random) -> Iterator[tuple[str, tuple, list, Callable[[list], int]]]:
    """Uniform over the move product space; picks from P uniform as well."""
    rng = np.random.default_rng(spoiler.seed)
    vts = variable_tuples(config.k, config.r)
    weights = np.array([float(n) ** len(ys) for ys in vts])
    weights /= weights.sum()
    for _ in range(spoiler.rounds):
        side = SIDES[int(rng.integers(2))] if config.kind == "maltsev" else "right"
        ys = vts[int(rng.choice(len(vts), p=weights))]
        atoms = [int(x) for x in rng.integers(0, n, size=len(ys))]
        yield side, ys, atoms, lambda P: int(rng.integers(len(P)))


def _play_moves(engine: _Engine, trace: Trace, moves) -> None:
    i = 0
    for i, (side, ys, atoms, choose) in enumerate(moves, start=1):
        try:
            P = engine.offer(side, ys, atoms)
            pick = choose(P) if P is not None else 0
            row = engine.play(side, ys, atoms, P, pick)
        except NoSafeEscape as exc:
            trace.result = {"result": f"Duplicator stuck at round {i}: {exc}", "survived": False, "rounds": i}
            return
        trace.rounds.append({"round": i, **row})
        if row["spoiler_wins"] or not row["conformant"]:
            trace.result = {"result": f"Spoiler won at round {i}", "survived": False, "rounds": i}
            return
    trace.result = {"result": f"Duplicator survived {i} rounds", "survived": True, "rounds": i}


def _exhaustive(config: GameConfig, S: CFIStructure, T: CFIStructure, spoiler: Exhaustive, strategy, trace: Trace) -> None:
    d = spoiler.depth
    if d == 0:
        trace.result = {"result": "Duplicator survived depth 0", "survived": True, "depth": 0}
        return
    if config.kind == "maltsev":
        if d > 2:
            raise BudgetExceeded("the merged Maltsev tree search is limited to depth 2")
        ver = MaltsevVerifier(S, T, config, strategy)
        rep = explore_maltsev(S, T, d, ver)
        for level, count in enumerate(rep.extra["positions"], start=1):
            trace.rounds.append({"round": level, "positions": count})
    else:
        total = move_count(config.k, config.r, S.n_atoms) ** d
        if total > spoiler.budget:
            raise BudgetExceeded(f"{total} move sequences exceed the budget {spoiler.budget}")
        ver = BPVerifier(S, T, config, strategy)
        rep = ver.verify(Position.empty(config.k), initial_memory_bp(S, T), budget=spoiler.budget)
        trace.rounds.append({"round": 1, "positions": 1})
    trace.rounds.append({"report": {k: v for k, v in rep.to_json().items() if k != "examples"}, "examples": rep.examples})
    if rep.ok:
        trace.result = {"result": f"Duplicator survived depth {d}", "survived": True, "depth": d}
    else:
        trace.result = {"result": "Spoiler won within depth " + str(d), "survived": False, "depth": d}


def play_game(
    config: GameConfig,
    S: CFIStructure,
    T: CFIStructure,
    spoiler: Random | Exhaustive | Interactive | Scripted,
    strategy=None,
) -> Trace:
    if S.graph != T.graph or S.variant != T.variant:
        raise ValueError("instances over different graphs or variants")
    if (config.kind == "maltsev") != (S.variant.kind == "maltsev"):
        raise ValueError(f"{config.kind} game does not match the {S.variant} instances")
    trace = Trace(_header(config, S, T, spoiler))
    if S.n_atoms != T.n_atoms:
        trace.result = {"result": "Spoiler won at round 0", "survived": False, "rounds": 0}
        return trace
    if isinstance(spoiler, Exhaustive):
        _exhaustive(config, S, T, spoiler, strategy, trace)
        return trace
    engine = _Engine(config, S, T, strategy)
    if isinstance(spoiler, Random):
        moves = _random_moves(config, S.n_atoms, spoiler)
    elif isinstance(spoiler, Scripted):
        moves = ((side, ys, atoms, lambda P, p=pick: p) for side, ys, atoms, pick in spoiler.moves)
    else:
        moves = _interactive_moves(engine, spoiler)
    _play_moves(engine, trace, moves)
    return trace


# -- interactive ----------------------------------------------------------


HELP = """Enter a move as  [left|right] x1,x2 = ATOM,ATOM  (side only in the Maltsev game).
Atoms are named e:<u>-<w>:<value> or v:<vertex>:<value>[ ...]; 'atoms' lists them, 'quit' ends the game."""


def parse_move(engine: _Engine, line: str) -> tuple[str, tuple[int, ...], list[int]]:
    cfg = engine.config
    lhs, eq, rhs = line.partition("=")
    if not eq:
        raise ValueError("expected '='")
    words = lhs.split()
    side = "right"
    if cfg.kind == "maltsev":
        if len(words) != 2 or words[0] not in SIDES:
            raise ValueError("expected a side (left or right) before the variables")
        side, words = words[0], words[1:]
    if len(words) != 1:
        raise ValueError("expected a comma-separated variable list")
    names = [w.strip() for w in words[0].split(",")]
    if any(n not in cfg.variables for n in names):
        raise ValueError(f"variables are {', '.join(cfg.variables)}")
    ys = tuple(cfg.variables.index(n) for n in names)
    if len(set(ys)) != len(ys) or not 1 <= len(ys) <= cfg.r:
        raise ValueError(f"choose 1 to {cfg.r} distinct variables")
    atoms = [a.strip() for a in rhs.split(",")]
    if len(atoms) != len(ys):
        raise ValueError("one atom per variable")
    unknown = [a for a in atoms if a not in engine.by_name]
    if unknown:
        raise ValueError(f"unknown atom {unknown[0]!r}")
    return side, ys, [engine.by_name[a] for a in atoms]


def _interactive_moves(engine: _Engine, sp: Interactive):
    out = sp.stdout
    S = engine.S
    print(HELP, file=out)
    played = 0
    while sp.rounds is None or played < sp.rounds:
        print(f"round {played + 1}> ", end="", file=out, flush=True)
        line = sp.stdin.readline()
        if not line or line.strip() == "quit":
            return
        line = line.strip()
        if not line:
            continue
        if line == "atoms":
            print(" ".join(engine.by_name), file=out)
            continue
        try:
            side, ys, atoms = parse_move(engine, line)
        except ValueError as exc:
            print(f"invalid move: {exc}", file=out)
            continue

        def choose(P) -> int:
            print("Duplicator offers:", file=out)
            for i, p in enumerate(P):
                print(f"  {i}: {','.join(_names(S, p))}", file=out)
            if len(P) == 1:
                return 0
            while True:
                print("pick> ", end="", file=out, flush=True)
                ans = sp.stdin.readline()
                if not ans:
                    return 0
                try:
                    k = int(ans.strip())
                    if 0 <= k < len(P):
                        return k
                except ValueError:
                    pass
                print(f"enter a number from 0 to {len(P) - 1}", file=out)

        played += 1
        yield side, ys, atoms, choose
        last = engine.pos
        print(
            "position: "
            + ", ".join(
                f"{v}: {S.atom_name(a)} -> {S.atom_name(b)}"
                for v, a, b in zip(engine.config.variables, last.alpha, last.beta)
                if a is not None
            ),
            file=out,
        )


# -- replay ---------------------------------------------------------------


def instances_from_header(header: dict) -> tuple[GameConfig, CFIStructure, CFIStructure]:
    cfg = header["config"]
    config = GameConfig(cfg["game"], cfg["k"], cfg["r"])
    graph = BaseGraph.from_json(header["graph"])
    variant = Variant.parse(header["variant"])
    twist = [graph.labels.index(x) for x in header["twist"]]
    S, T = build_cfi(graph, (), variant), build_cfi(graph, twist, variant)
    if {"left": S.structure.digest(), "right": T.structure.digest()} != header["digests"]:
        raise ValueError("structure digests do not match the trace header")
    return config, S, T


def scripted_from_trace(trace: Trace, S: CFIStructure, config: GameConfig) -> Scripted:
    by_name = {S.atom_name(x): x for x in S.structure.universe}
    moves = []
    for row in trace.rounds:
        ys = tuple(config.variables.index(y) for y in row["ys"])
        moves.append((row.get("side", "right"), ys, [by_name[a] for a in row["a"]], row.get("pick", 0)))
    return Scripted(tuple(moves))


def replay(trace: Trace) -> tuple[bool, list[str]]:
    """Re-simulate the trace and compare it line by line."""
    config, S, T = instances_from_header(trace.header)
    sp = trace.header["spoiler"]
    if sp["kind"] == "random":
        again = play_game(config, S, T, Random(sp["seed"], sp["rounds"]))
    elif sp["kind"] == "exhaustive":
        again = play_game(config, S, T, Exhaustive(sp["depth"]))
    else:
        again = play_game(config, S, T, scripted_from_trace(trace, S, config))
        again.header = trace.header
    diffs = []
    old, new = trace.lines(), again.lines()
    if len(old) != len(new):
        diffs.append(f"{len(old)} lines recorded, {len(new)} re-simulated")
    for i, (a, b) in enumerate(zip(old, new)):
        if a != b:
            diffs.append(f"line {i + 1} differs")
    return not diffs, diffs
