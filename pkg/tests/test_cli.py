import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from stratcheck import cli

ROOT = Path(__file__).resolve().parents[1]
SQUARES = '{"nvars": 2, "components": ["x1^2+x2^2"]}'
AXIS = '{"nvars": 2, "components": ["x1^2"]}'
SADDLE = '{"nvars": 2, "components": ["x1^2-x2^2"]}'
SADDLE_G = '{"nvars": 2, "components": ["x1^2-x2^2+x1^3"]}'
FAST = ["--shells", "9", "--samples", "300"]


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_kuo_holds_exit_0(tmp_path, capsys):
    code, out, _ = run(["kuo", "--f", SQUARES, "--out", str(tmp_path)] + FAST, capsys)
    assert code == 0
    report = json.loads((tmp_path / "kuo.json").read_text())
    assert report["report"]["verdict"] == "holds"
    assert report["report"]["C_est"] == pytest.approx(2.0, rel=1e-9)
    assert report["config"]["samples"] == 300 and report["config"]["thresholds"]["C_floor"] == 1e-3
    head = (tmp_path / "kuo_shells.csv").read_text().splitlines()[0]
    assert head == "radius,min_kappa,ratio,n_points,argmin"
    assert "timing" not in report and (tmp_path / "timing.json").exists()


def test_kuo_fails_exit_2(tmp_path, capsys):
    code, _, _ = run(["kuo", "--f", AXIS, "--r", "2", "--width", "1", "--out", str(tmp_path)] + FAST, capsys)
    assert code == 2


def test_kuo_inconclusive_exit_3(tmp_path, capsys):
    # a C_floor above the true constant with the right slope cannot be called either way
    args = ["kuo", "--f", SQUARES, "--threshold", "C_floor=5", "--out", str(tmp_path)] + FAST
    code, _, _ = run(args, capsys)
    assert code == 3


def test_malformed_polynomial_exit_1(tmp_path, capsys):
    bad = '{"nvars": 2, "components": ["x1^2+*x2"]}'
    code, _, err = run(["kuo", "--f", bad, "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "position 5" in err


@pytest.mark.parametrize(
    "args",
    [
        ["kuo"],
        ["kuo", "--f", "no/such/file.json"],
        ["kuo", "--f", "{not json"],
        ["kuo", "--f", SQUARES, "--threshold", "bogus=1"],
        ["kuo", "--f", SQUARES, "--threshold", "C_floor"],
        ["kuo", "--f", SQUARES, "--samples", "0"],
        ["kuo", "--f", SQUARES, "--seed", "-3"],
        ["kuo", "--f", SQUARES, "--config", '{"gamma": 2.0}'],
        ["kuo", "--f", SQUARES, "--config", '{"unknown_key": 1}'],
        ["kuo", "--f", '{"nvars": 2, "components": ["x1 + 1"]}'],
        ["kuo", "--samples", "many"],
        ["nonsense"],
        [],
    ],
)
def test_input_errors_exit_1(args, tmp_path, capsys):
    code, _, _ = run(args + ["--out", str(tmp_path)] if args and args[0] == "kuo" else args, capsys)
    assert code == 1


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"f": json.loads(SQUARES), "samples": 100, "shells": 5, "seed": 3,
                               "thresholds": {"slope_tol": 0.2}}))
    code, _, _ = run(["kuo", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    echoed = json.loads((tmp_path / "o" / "kuo.json").read_text())["config"]
    assert echoed["seed"] == 9 and echoed["samples"] == 100
    assert echoed["thresholds"]["slope_tol"] == 0.2 and echoed["thresholds"]["gap_pass"] == 0.05


def test_germ_from_file(tmp_path, capsys):
    gfile = tmp_path / "f.json"
    gfile.write_text(SQUARES)
    code, _, _ = run(["kuo", "--f", str(gfile), "--out", str(tmp_path / "o")] + FAST, capsys)
    assert code == 0


def test_regularity_linear_exit_0(tmp_path, capsys):
    lin = '{"nvars": 2, "components": ["x1"]}'
    code, out, _ = run(["regularity", "--f", lin, "--g", lin, "--r", "1", "--out", str(tmp_path)] + FAST, capsys)
    assert code == 0
    body = json.loads((tmp_path / "regularity.json").read_text())
    assert set(body["verdicts"]) == {"kuo", "a", "m", "c_d", "c"}
    for name in ("a", "m", "c_d", "c"):
        assert (tmp_path / f"regularity_{name}.csv").read_text().startswith("radius,t0,branch")


def test_regularity_jet_mismatch_lists_monomial(tmp_path, capsys):
    g = '{"nvars": 2, "components": ["x1^2-x2^2+5*x1*x2"]}'
    code, _, err = run(["regularity", "--f", SADDLE, "--g", g, "--r", "2", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "x1*x2" in err


def test_regularity_kuo_passing_family_with_claims(tmp_path, capsys):
    args = ["regularity", "--f", SADDLE, "--g", SADDLE_G, "--r", "2", "--claims", "--t-grid", "5",
            "--out", str(tmp_path)] + FAST
    code, out, _ = run(args, capsys)
    assert code == 0
    body = json.loads((tmp_path / "regularity.json").read_text())
    assert all(body["verdicts"][k] == "holds" for k in ("kuo", "a", "m", "c_d", "c", "claimII", "lemma_cd",
                                                         "key_estimation"))
    assert body["implication_consistent"] and body["theorem_consistent"]
    assert body["config"]["t_grid"] == 5
    assert body["reports"]["claimII"]["extra"]["t_grid"][0] == -0.1


def test_regularity_require_selects_conditions(tmp_path, capsys):
    # Kuo fails here while every regularity condition holds
    f = '{"nvars": 3, "components": ["x1^2-x2^2"]}'
    g = '{"nvars": 3, "components": ["x1^2-x2^2+x3^2"]}'
    base = ["regularity", "--f", f, "--g", g, "--r", "1", "--shells", "13", "--samples", "300"]
    code, _, _ = run(base + ["--out", str(tmp_path / "a")], capsys)
    assert code == 2
    code, _, _ = run(base + ["--require", "a,m,c_d,c", "--out", str(tmp_path / "b")], capsys)
    assert code == 0
    code, _, _ = run(base + ["--require", "a,bogus", "--out", str(tmp_path / "c")], capsys)
    assert code == 1


def test_regularity_inconclusive_exit_3(tmp_path, capsys):
    # with shells stopping at the evaluation radius, (m) has nothing to judge
    f = '{"nvars": 2, "components": ["x1^3-x2^3"]}'
    g = '{"nvars": 2, "components": ["x1^3-x2^3+x1^2"]}'
    code, _, _ = run(["regularity", "--f", f, "--g", g, "--r", "1", "--require", "m",
                      "--out", str(tmp_path)] + FAST, capsys)
    assert code == 3


def test_implication_failure_exit_4(tmp_path, capsys, monkeypatch):
    from stratcheck.regularity import conditions

    def broken(reports):
        return [{"t0": 0.0, "branch": 0}]

    monkeypatch.setattr(conditions, "implication_counterexamples", broken)
    lin = '{"nvars": 2, "components": ["x1"]}'
    code, _, err = run(["regularity", "--f", lin, "--g", lin, "--r", "1", "--out", str(tmp_path)] + FAST, capsys)
    assert code == 4
    assert "implication" in err


def test_kuo2(tmp_path, capsys):
    g = '{"nvars": 2, "components": ["x1^2+x2^2+x1^4"]}'
    code, out, _ = run(["kuo2", "--f", SQUARES, "--g", g, "--g", g, "--width", "1e6", "--out", str(tmp_path)]
                       + FAST, capsys)
    assert code == 0
    body = json.loads((tmp_path / "kuo2.json").read_text())
    assert len(body["reports"]) == 2 and body["reports"][0]["exponent"] == 1.5
    assert (tmp_path / "kuo2_shells_1.csv").exists()


def test_gap_command(capsys):
    code, out, _ = run(["gap", "[[1, 0]]", "[[1, 0]]"], capsys)
    assert code == 0 and "gap: 0.0" in out and "intersection_dim: 1" in out
    code, out, _ = run(["gap", "[[1, 0]]", "[[0, 1]]"], capsys)
    assert code == 0 and "gap: 1.0" in out
    a = str(ROOT / "docs" / "examples" / "line_e1.json")
    b = str(ROOT / "docs" / "examples" / "line_diagonal.json")
    code, out, _ = run(["gap", a, b], capsys)
    value = float(out.splitlines()[0].split()[1])
    # sphere maximisation oracle for a line: the only unit vectors are +-e1
    u = np.array([1.0, 0.0, 0.0])
    d = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    assert value == pytest.approx(np.linalg.norm(u - (u @ d) * d), abs=1e-15)
    assert value == pytest.approx(np.sqrt(2) / 2, abs=1e-15)
    plane = str(ROOT / "docs" / "examples" / "plane_e1e2.json")
    code, out, _ = run(["gap", a, plane], capsys)
    assert code == 0 and "intersection_dim: 1" in out


@pytest.mark.parametrize(
    "first, second",
    [("[[1, 0, 0]]", "[[0, 1]]"), ("[[1, 0], [0, 1]]", "[[1, 0]]"), ("[]", "[[1]]"), ("[[1, null]]", "[[1, 0]]")],
)
def test_gap_bad_input_exit_1(first, second, capsys):
    code, _, err = run(["gap", first, second], capsys)
    assert code == 1 and err


def test_sample_horn(tmp_path, capsys):
    code, out, _ = run(["sample-horn", "--f", SADDLE, "--width", "0.1", "--shells", "3", "--samples", "40",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "horn_samples.csv").read_text().splitlines()
    assert lines[0] == "radius,x1,x2,abs_f"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert len(rows) == 120
    assert np.allclose(np.linalg.norm(rows[:, 1:3], axis=1), rows[:, 0], rtol=1e-12)
    assert np.all(rows[:, 3] <= 0.1 * rows[:, 0] ** 2 * (1 + 1e-12))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    cli.write_atomic(tmp_path / "a" / "x.txt", "hello")
    assert (tmp_path / "a" / "x.txt").read_text() == "hello"
    assert os.listdir(tmp_path / "a") == ["x.txt"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stratcheck", "gap", "[[1, 0]]", "[[0, 1]]"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "gap: 1.0" in proc.stdout


def test_bundled_config_resolves_germ_paths(tmp_path, capsys):
    cfg = str(ROOT / "docs" / "examples" / "saddle_run.json")
    code, _, _ = run(["regularity", "--config", cfg, "--shells", "9", "--samples", "200",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    echoed = json.loads((tmp_path / "regularity.json").read_text())["config"]
    assert echoed["f"] == {"nvars": 2, "components": ["x1^2-x2^2"]}
    assert echoed["g"]["components"] == ["x1^2-x2^2+x1^3"]
