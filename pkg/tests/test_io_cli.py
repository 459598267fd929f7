import csv
import json
from pathlib import Path

import numpy as np
import pytest

from jetinterp.cli import main
from jetinterp.errors import SchemaError
from jetinterp.flow_atlas import FlowWord, OvershearField, ShearField, flow_eval
from jetinterp.io import (csv_text, decode_complex, decode_jet_tuple, decode_word, dumps, encode_complex,
                          encode_jet_tuple, encode_word, sha256_file)
from jetinterp.jet_core import JetTuple
from oracles import random_jet_coeffs

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def write_problem(path, kind, payload, **extra):
    path.write_text(dumps({"kind": kind, "payload": payload, **extra}))
    return path


def small_target(rng):
    bp = np.zeros((1, 2))
    return JetTuple.from_coeffs(bp, random_jet_coeffs(rng, 2, 1, scale=0.05)[None])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_complex_roundtrip(rng):
    a = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
    assert np.array_equal(decode_complex(json.loads(json.dumps(encode_complex(a)))), a)
    with pytest.raises(SchemaError):
        decode_complex([[1.0, 2.0, 3.0]], "x")


def test_jet_tuple_roundtrip(rng):
    bp = np.array([[0.0, 0.0], [1.0, 0.0]])
    gamma = JetTuple.from_coeffs(bp, np.stack([random_jet_coeffs(rng, 2, 2, image=b) for b in bp]))
    back = decode_jet_tuple(json.loads(dumps(encode_jet_tuple(gamma))))
    assert np.array_equal(back.coeffs, gamma.coeffs)
    bad = encode_jet_tuple(gamma)
    bad["coeffs"] = bad["coeffs"][:1]
    with pytest.raises(SchemaError) as info:
        decode_jet_tuple(bad, "payload.target")
    assert info.value.location == "payload.target.coeffs"


def test_word_roundtrip(rng):
    f = ShearField([1, 0], [0, 1], [(0, 0.3), (2, 0.1j)])
    g = OvershearField([0, 1], [1, 0], [(1, -0.2)], center=[0.5, 0])
    word = FlowWord.from_fields([f, g, f], [0.5, 1j, -0.25])
    enc = json.loads(dumps(encode_word(word)))
    assert len(enc["fields"]) == 2
    z = rng.normal(size=(10, 2))
    assert np.array_equal(flow_eval(decode_word(enc), z), flow_eval(word, z))


def test_csv_formatting():
    text = csv_text(["a", "b", "c"], [(0.1, True, 3)])
    assert text == "a,b,c\n0.1,true,3\n"


def test_realize_and_verify(tmp_path, rng, capsys):
    target = small_target(rng)
    prob = write_problem(tmp_path / "p.json", "realize", {"target": encode_jet_tuple(target)}, seed=3)
    out = tmp_path / "out"
    assert main(["realize", "--input", str(prob), "--out-dir", str(out)]) == 0
    row = read_csv(out / "report.csv")[0]
    assert float(row["residual"]) <= 1e-10 and row["certified"] == "true"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["certified"]
    for name, digest in manifest["outputs"].items():
        assert sha256_file(out / name) == digest

    assert main(["verify", str(out / "word.json"), str(prob)]) == 0
    assert "PASS" in capsys.readouterr().out
    moved = encode_jet_tuple(target)
    moved["coeffs"][0][0][1][0] += 1e-3
    other = write_problem(tmp_path / "q.json", "realize", {"target": moved})
    assert main(["verify", str(out / "word.json"), str(other), "--out-dir", str(tmp_path / "v")]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert read_csv(tmp_path / "v" / "verify.csv")[0]["certified"] == "false"


def test_identity_target_gives_empty_word(tmp_path):
    target = JetTuple.identity(np.zeros((1, 2)), 1)
    prob = write_problem(tmp_path / "p.json", "realize", {"target": encode_jet_tuple(target)})
    assert main(["realize", "--input", str(prob), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "word.json").read_text())["word"]["letters"] == []


def test_schema_error_names_the_field(tmp_path, rng, capsys):
    payload = {"target": encode_jet_tuple(small_target(rng))}
    payload["target"]["coeffs"][0][0][1] = [1.0, "x"]
    prob = write_problem(tmp_path / "p.json", "realize", payload)
    assert main(["realize", "--input", str(prob), "--out-dir", str(tmp_path)]) == 2
    assert "schema error at payload.target.coeffs.0.0.1" in capsys.readouterr().err


@pytest.mark.parametrize("problem", [
    {"kind": "realize", "payload": {"target": {}}, "extra": 1},
    {"kind": "unknown", "payload": {}},
    {"kind": "psi-rank", "payload": {"M": 1}},
])
def test_invalid_problems_exit_2(tmp_path, problem):
    prob = tmp_path / "p.json"
    prob.write_text(json.dumps(problem))
    cmd = problem["kind"] if problem["kind"] != "unknown" else "realize"
    assert main([cmd, "--input", str(prob), "--out-dir", str(tmp_path)]) == 2


def test_kind_must_match_subcommand(tmp_path, capsys):
    prob = write_problem(tmp_path / "p.json", "psi-rank", {"M": 2})
    assert main(["factor", "--input", str(prob), "--out-dir", str(tmp_path)]) == 2
    assert "schema error at kind" in capsys.readouterr().err


def test_factor_failure_exit_1(tmp_path):
    prob = write_problem(tmp_path / "p.json", "factor", {"matrix": [[2, 0], [0, 1]]})
    assert main(["factor", "--input", str(prob), "--out-dir", str(tmp_path)]) == 1
    assert read_csv(tmp_path / "failure.csv")[0]["error"] == "NotSL"


def test_factor_rational(tmp_path):
    out = tmp_path / "out"
    assert main(["factor", "--input", str(PROBLEMS / "factor_sl3.json"), "--out-dir", str(out), "--rational"]) == 0
    row = read_csv(out / "report.csv")[0]
    assert row["mode"] == "rational" and row["recomposition_error"] == "0"


def test_obstruction_report(tmp_path):
    out = tmp_path / "out"
    assert main(["obstruct", "--input", str(PROBLEMS / "obstruction_counterexample.json"), "--out-dir", str(out)]) == 0
    row = read_csv(out / "report.csv")[0]
    assert row["verdict"] == "Incompatible"
    assert row["certificate"] == "(w−1)¹ coefficient 0 ≠ 1"


def test_psi_rank_report(tmp_path):
    prob = write_problem(tmp_path / "p.json", "psi-rank", {"M": 3, "random": 10, "critical": True}, seed=1)
    assert main(["psi-rank", "--input", str(prob), "--out-dir", str(tmp_path)]) == 0
    assert all(r["rank"] in ("0", "1") for r in read_csv(tmp_path / "report.csv"))


def test_reports_are_deterministic(tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}"
        assert main(["realize", "--input", str(PROBLEMS / "realize_points_swap.json"), "--out-dir", str(out)]) == 0
        outs.append(out)
    a, b = (json.loads((o / "manifest.json").read_text()) for o in outs)
    assert a["outputs"] == b["outputs"]
    assert (outs[0] / "word.json").read_bytes() == (outs[1] / "word.json").read_bytes()
