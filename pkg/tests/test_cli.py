from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from polyquant.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, capsys, name, *argv):
    path = tmp_path / name
    code, _, _ = call(capsys, *argv, "--out", str(path))
    assert code == 0
    return str(path)


def test_template_and_close(capsys, tmp_path):
    code, out, _ = call(capsys, "template", "--kind", "nu", "--params", "3")
    B = json.loads(out)
    assert code == 0 and len(B["universe"]) == 3 and len(B["relations"]["R0"]) == 9
    path = tmp_path / "b.json"
    path.write_text(out)
    code, out2, _ = call(capsys, "close", "--structure", str(path), "--family", "nu:3")
    assert code == 0 and json.loads(out2) == B
    assert call(capsys, "close", "--structure", str(path), "--family", "weird")[0] == 2


def test_graph(capsys):
    code, out, _ = call(capsys, "graph", "--kind", "composite", "--params", "3", "4", "--connectivity")
    g = json.loads(out)
    assert code == 0 and g["edge_connectivity"] == 3 and len(g["edges"]) == 60
    assert call(capsys, "graph", "--kind", "torus", "--params", "3", "8")[0] == 0
    assert call(capsys, "graph", "--kind", "biclique", "--params", "3", "4")[0] == 2
    assert call(capsys, "graph", "--kind", "complete", "--params", "x")[0] == 2


def test_flagship_csp(capsys, tmp_path):
    g = write(tmp_path, capsys, "g.json", "graph", "--kind", "composite", "--params", "3", "4")
    b = write(tmp_path, capsys, "b.json", "template", "--kind", "nu", "--params", "3")
    plain = write(tmp_path, capsys, "a.json", "instance", "--graph", g, "--variant", "nu:3")
    code, out, _ = call(capsys, "csp", "--instance", plain, "--template", b)
    rep = json.loads(out)
    assert code == 0 and rep["solver"] == "SAT" and rep["verdict"] == "SAT"
    assert rep["projection"] == "verified" and rep["witness_check"] == "passed" and rep["agreement"]
    tw = write(tmp_path, capsys, "t.json", "instance", "--graph", g, "--variant", "nu:3", "--twist")
    code, out, _ = call(capsys, "csp", "--instance", tw, "--template", b, "--budget", "50")
    rep = json.loads(out)
    assert code == 0 and rep["oracle"] == "UNSAT" and rep["solver"] == "budget exhausted"


def test_csp_budget_exit_code(capsys, tmp_path):
    g = write(tmp_path, capsys, "g.json", "graph", "--kind", "complete", "--params", "4")
    b = write(tmp_path, capsys, "b.json", "template", "--kind", "nu", "--params", "3")
    a = write(tmp_path, capsys, "a.json", "instance", "--graph", g, "--variant", "nu:3", "--twist")
    code, out, _ = call(capsys, "csp", "--instance", a, "--template", b, "--budget", "3")
    assert code == 3 and json.loads(out)["verdict"] == "unknown"


def test_reduce(capsys, tmp_path):
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"vocab": [{"name": "R", "arity": 4}], "universe": [0, 1], "relations": {"R": [[0, 0, 1, 1]]}}))
    code, out, _ = call(capsys, "reduce", "--structure", str(a), "--ell", "3")
    rep = json.loads(out)
    assert code == 0 and len(rep["division"]) == 3
    code, out, _ = call(capsys, "reduce", "--structure", str(a), "--ell", "3", "--division", "1-2,3,4")
    assert code == 0 and json.loads(out)["division"] == [[1, 2], [3, 3], [4, 4]]
    assert call(capsys, "reduce", "--structure", str(a), "--ell", "3", "--division", "1-2,3-4")[0] == 2
    assert call(capsys, "reduce", "--structure", str(a), "--ell", "3", "--division", "a-b")[0] == 2


def test_verify(capsys):
    code, out, err = call(capsys, "verify", "--lemma", "separating", "--params", "3", "--seed", "5")
    rep = json.loads(out)
    assert code == 0 and rep["violations"] == 0 and rep["seed"] == 5 and "checked" in err
    assert call(capsys, "verify", "--lemma", "nope")[0] == 2


def test_usage_errors(capsys, tmp_path):
    assert call(capsys)[0] == 2
    assert call(capsys, "instance", "--graph", str(tmp_path / "missing.json"), "--variant", "nu:3")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert call(capsys, "close", "--structure", str(bad), "--family", "maltsev")[0] == 2
    assert call(capsys, "template", "--kind", "nu", "--params", "2")[0] == 2


def test_game_run_and_replay(capsys, tmp_path):
    path = tmp_path / "trace.jsonl"
    args = ["game", "run", "--game", "maltsev", "--rounds", "15", "--seed", "3"]
    code, _, err = call(capsys, *args, "--out", str(path))
    assert code == 0 and err.strip()
    code, out, _ = call(capsys, *args)
    assert out == path.read_text()
    code, out, _ = call(capsys, "game", "replay", str(path))
    assert code == 0 and json.loads(out)["identical"]
    lines = path.read_text().splitlines()
    i = next(i for i, ln in enumerate(lines) if '"pick":0' in ln)
    lines[i] = lines[i].replace('"pick":0', '"pick":1')
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = call(capsys, "game", "replay", str(path))
    assert code == 1 and not json.loads(out)["identical"]
    assert call(capsys, "game", "replay", str(tmp_path / "none.jsonl"))[0] == 2


def test_game_run_bijection_and_budget(capsys):
    code, out, _ = call(capsys, "game", "run", "--rounds", "5", "--seed", "1")
    assert code == 0 and len(out.splitlines()) >= 5
    assert call(capsys, "game", "run", "--spoiler", "exhaustive", "--depth", "2", "--budget", "1000")[0] == 3


def test_game_verify_round(capsys):
    code, out, _ = call(capsys, "game", "verify-round", "--game", "maltsev", "--states", "1", "--seed", "2")
    rep = json.loads(out)
    assert code == 0 and rep["summary"]["states"] == 2 and rep["summary"]["violations"] == 0
    assert rep["summary"]["coverage"] == "exhaustive" and rep["seed"] == 2


def test_game_play(capsys, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO("right x1 = e:a0-b2:1\nquit\n"))
    code, out, _ = call(capsys, "game", "play", "--game", "maltsev")
    assert code == 0 and out.strip()


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "polyquant.cli", "template", "--kind", "clique", "--params", "3"], capture_output=True, text=True)
    assert proc.returncode == 0 and len(json.loads(proc.stdout)["universe"]) == 3
