from __future__ import annotations

import csv
import json
import math
import subprocess
import sys

import pytest

from stokeslab.cli import main, to_json


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out), "--threads", "2"])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


def test_solve_table(tmp_path, capsys):
    code, out = run(tmp_path, "solve", "euler", "--order", "25")
    assert code == 0
    d = report(out)
    assert [c[0] for c in d["coefficients"][1:5]] == ["1", "1", "2", "6"]
    assert d["coefficients"][25][0] == str(math.factorial(24))
    rows = list(csv.reader(open(out / "coefficients.csv")))
    assert len(rows) > 20
    assert "formal solution" in (out / "summary.txt").read_text()
    assert "24" in capsys.readouterr().out


def test_solve_from_file(tmp_path):
    src = tmp_path / "sys.json"
    src.write_text(json.dumps({"p": 1, "r": 1, "name": "mine", "terms": [
        {"component": 0, "x_exp": 0, "y_exps": [1], "coeff": [1, 0]},
        {"component": 0, "x_exp": 1, "y_exps": [0], "coeff": [-1, 0]}]}))
    code, out = run(tmp_path, "solve", str(src), "--order", "6")
    assert code == 0 and report(out)["system"] == "mine"


def test_missing_file_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", str(tmp_path / "missing.json"))
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_bad_flags_exit_2(tmp_path):
    assert run(tmp_path, "solve", "euler", "--order", "0")[0] == 2
    assert main(["nonsense"]) == 2
    assert run(tmp_path, "probe", "euler")[0] == 2      # neither --spec nor --random


def test_numeric_failure_exits_3(tmp_path, capsys):
    src = tmp_path / "grow.json"
    src.write_text(json.dumps({"p": 1, "r": 1, "name": "grow", "terms": [
        {"component": 0, "x_exp": 0, "y_exps": [1], "coeff": [-1, 0]}]}))
    code, _ = run(tmp_path, "trajectory", str(src), "--offset", "0.1")
    assert code == 3
    assert "BlowUp" in capsys.readouterr().err


def test_gevrey_and_borel(tmp_path):
    code, out = run(tmp_path, "gevrey", "odd_pump")
    assert code == 0 and 0.4 <= report(out)["estimates"][0]["kappa"] <= 0.6
    code, out = run(tmp_path, "borel", "euler", "--order", "17", "--degree", "8")
    assert code == 0
    assert "poles" in json.dumps(report(out))


def test_resum_stokes_and_sd(tmp_path):
    code, out = run(tmp_path, "resum", "euler2d", "--grid-points", "4")
    assert code == 0 and (out / "report.json").exists()
    code, out = run(tmp_path, "stokes", "euler")
    assert code == 0
    g = report(out)["reports"][0]["gamma"]
    assert abs(complex(*g) - 2j * 3.141592653589793) < 1e-3 * 6.3
    code, out = run(tmp_path, "sd-check", "convergent")
    assert code == 0 and report(out)["sd"]["ok"] is False


def test_trajectory_writes_csv(tmp_path):
    code, out = run(tmp_path, "trajectory", "euler2d", "--offset", "0.01,-0.01")
    assert code == 0
    rows = list(csv.reader(open(out / "trajectory.csv")))
    assert rows[0] == ["x", "y1", "y2", "step"]
    assert len(report(out)["remainder_constants"]) == 9


def test_probe_spec_and_random(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"f_terms": [{"x_exp": 0, "z_exps": [1, 0], "coeff": [1, 0]},
                                            {"x_exp": 0, "z_exps": [0, 1], "coeff": [-1, 0]}],
                                "polynomials": [[0, 1], [0, 2]], "k": 0, "mode": "SAT"}))
    code, out = run(tmp_path, "probe", "euler", "--spec", str(spec), "--order", "20")
    d = report(out)
    assert code == 0 and d["first_nonzero_order"] == 1 and d["coefficient"] == [-1.0, 0.0]
    code, out = run(tmp_path, "probe", "euler", "--spec", str(spec), "--mode", "SQA")
    assert code == 0 and "zero_count" in report(out)
    code, out = run(tmp_path, "probe", "euler2d", "--random", "5", "--seed", "3", "--order", "20")
    assert code == 0 and report(out)["vanished"] == 0


def test_casestudy_linking(tmp_path):
    code, out = run(tmp_path, "casestudy", "linking")
    d = report(out)
    assert code == 0 and d["turns"] != 0
    assert abs(abs(d["turns"]) - d["expected_turns"]) <= 0.2 * d["expected_turns"]
    assert (out / "difference.csv").exists() and (out / "summary.txt").exists()


def test_casestudy_euler_numbers(tmp_path):
    code, out = run(tmp_path, "casestudy", "euler")
    assert code == 0
    assert "|Delta(0.1)| = 2.85256" in (out / "summary.txt").read_text()


def test_determinism_across_runs_and_threads(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["casestudy", "euler2d", "--out", str(a), "--threads", "1", "--seed", "7"]) == 0
    assert main(["casestudy", "euler2d", "--out", str(b), "--threads", "4", "--seed", "7"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"order": 7}))
    code, out = run(tmp_path, "solve", "euler", "--order", "20", "--config", str(cfg))
    assert code == 0 and report(out)["order"] == 7
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "solve", "euler", "--config", str(cfg))[0] == 2


def test_json_formatting():
    assert to_json({"a": 0.1, "b": [1, 2.5]}) == to_json({"a": 0.1, "b": [1, 2.5]})
    assert "0.10000000000000001" in to_json({"a": 0.1})


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "stokeslab.cli", "solve", "euler", "--order", "5",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "report.json").exists()
