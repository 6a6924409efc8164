import csv
import json
import os
import subprocess
import sys

import jsonschema
import pytest

from boltzwave import cli
from boltzwave.schemas import load_schema


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("BOLTZWAVE_THREADS", raising=False)
    return tmp_path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_verify_lemma_writes_schema_valid_report(in_tmp):
    assert cli.main(["verify-lemma", "--id", "L6.4", "--t-max", "100", "--out", "r.json"]) == 0
    doc = json.loads((in_tmp / "r.json").read_text())
    jsonschema.validate(doc, load_schema("ratio-report"))
    assert doc["passed"] and doc["case_id"] == "L6.4"
    rows = read_csv(in_tmp / "r.csv")
    assert len(rows) == len(doc["samples"]) >= 50


def test_unknown_lemma_id_is_a_usage_error(capsys):
    assert cli.main(["verify-lemma", "--id", "L6.42"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_lemma_id_is_a_usage_error(capsys):
    assert cli.main(["verify-lemma"]) == 1
    assert "--id is required" in capsys.readouterr().err


def test_seeded_runs_are_byte_identical(in_tmp):
    args = ["verify-lemma", "--id", "L6.1", "--seed", "7", "--n-random", "5"]
    assert cli.main(args + ["--out", "a.json"]) == 0
    assert cli.main(args + ["--out", "b.json"]) == 0
    assert (in_tmp / "a.csv").read_bytes() == (in_tmp / "b.csv").read_bytes()
    assert (in_tmp / "a.json").read_bytes() == (in_tmp / "b.json").read_bytes()
    assert cli.main(["verify-lemma", "--id", "L6.1", "--seed", "8", "--n-random", "5",
                     "--out", "c.json"]) == 0
    assert (in_tmp / "c.csv").read_bytes() != (in_tmp / "a.csv").read_bytes()


def test_failing_case_exits_two(in_tmp):
    assert cli.main(["verify-lemma", "--id", "L6.6", "--c", "1", "--out", "l66.json"]) == 2
    assert json.loads((in_tmp / "l66.json").read_text())["stability"] > 2.0


def test_eigensystem_prints_sound_speeds(capsys, in_tmp):
    assert cli.main(["eigensystem", "--omega", "0,0,1"]) == 0
    out = capsys.readouterr().out
    assert "1.290994" in out and "-1.290994" in out
    assert len(json.loads((in_tmp / "eigensystem.json").read_text())["eigenvalues"]) == 5


def test_eigensystem_rejects_zero_direction():
    assert cli.main(["eigensystem", "--omega", "0,0,0"]) == 1
    assert cli.main(["eigensystem", "--omega", "0,1"]) == 1


def test_rho_check_reports_zero_violations(in_tmp):
    assert cli.main(["rho-check", "--grid-step", "0.25"]) == 0
    doc = json.loads((in_tmp / "rho-check.json").read_text())
    assert doc["violations"] == 0 and doc["schema"] == "boltzwave.rho-check/1"
    assert len(read_csv(in_tmp / "rho-check.csv")) == 801


def test_interaction_map_centroid(in_tmp):
    args = ["interaction-map", "--lhs", "huygens:2.5", "--rhs", "hpoly:4,2", "--x", "50", "--t", "100"]
    assert cli.main(args) == 0
    rows = read_csv(in_tmp / "interaction-map.csv")
    mass = sum(float(r["mass"]) for r in rows)
    cen = sum(float(r["s"]) * float(r["mass"]) for r in rows) / mass
    assert (100 - 50) / 2 <= cen <= (100 + 50) / 2


def test_interaction_map_bad_pattern():
    assert cli.main(["interaction-map", "--lhs", "wave:1", "--rhs", "hpoly:4,2"]) == 1


def test_convolve_with_mc_check(in_tmp):
    assert cli.main(["convolve", "--lhs", "diffusion:1.5", "--rhs", "exp:0.5", "--x", "2",
                     "--t", "5", "--mc-samples", "100000"]) == 0
    doc = json.loads((in_tmp / "convolve.json").read_text())
    assert doc["converged"] and doc["mc"]["agree"]


def test_nu_profile(in_tmp):
    assert cli.main(["nu-profile", "--xi-max", "10", "--step", "0.5"]) == 0
    doc = json.loads((in_tmp / "nu-profile.json").read_text())
    assert doc["nu1"] == pytest.approx(10.026513098524001, rel=1e-12)
    assert len(read_csv(in_tmp / "nu-profile.csv")) == 21


def test_closure_commands(in_tmp):
    assert cli.main(["closure", "--n-steps", "1000"]) == 0
    doc = json.loads((in_tmp / "closure.json").read_text())
    assert doc["verdict"]["passed"] and doc["iteration"]["bounded"]
    assert cli.main(["closure", "--eps-factor", "10", "--out", "c10.json"]) == 2
    doc = json.loads((in_tmp / "c10.json").read_text())
    assert not doc["iteration"]["bounded"]


def test_closure_rejects_large_eta(in_tmp, capsys):
    led = json.loads(cli.closure.default_ledger().to_json())
    led["eta"] = 0.25
    (in_tmp / "led.json").write_text(json.dumps(led))
    assert cli.main(["closure", "--ledger", "led.json"]) == 2
    assert "η(β,R) < 1/8" in capsys.readouterr().out


def test_config_file_precedence(in_tmp):
    (in_tmp / "run.cfg").write_text("# defaults for this run\nomega = 1,0,0\nout = cfg.json\n")
    assert cli.main(["eigensystem", "--config", "run.cfg"]) == 0
    assert json.loads((in_tmp / "cfg.json").read_text())["omega"] == [1.0, 0.0, 0.0]
    assert cli.main(["eigensystem", "--config", "run.cfg", "--omega", "0,1,0"]) == 0
    assert json.loads((in_tmp / "cfg.json").read_text())["omega"] == [0.0, 1.0, 0.0]


def test_config_file_errors(in_tmp):
    (in_tmp / "bad.cfg").write_text("no_such_key = 3\n")
    assert cli.main(["eigensystem", "--config", "bad.cfg"]) == 1
    (in_tmp / "bad2.cfg").write_text("just words\n")
    assert cli.main(["eigensystem", "--config", "bad2.cfg"]) == 1
    assert cli.main(["eigensystem", "--config", "missing.cfg"]) == 3


def test_io_error_exits_three_and_leaves_no_partial_file(in_tmp):
    (in_tmp / "blocker").write_text("a file, not a directory")
    assert cli.main(["eigensystem", "--out", "blocker/e.json"]) == 3
    assert cli.main(["eigensystem", "--out", "ok.json", "--csv", "blocker/e.csv"]) == 3
    assert not (in_tmp / "ok.json").exists()
    assert not [p for p in os.listdir(in_tmp) if p.endswith(".tmp")]


def test_no_command_is_usage_error():
    assert cli.main([]) == 1


def test_console_entry_point(in_tmp):
    res = subprocess.run([sys.executable, "-m", "boltzwave", "eigensystem", "--omega", "0,0,1"],
                         capture_output=True, text=True, cwd=in_tmp)
    assert res.returncode == 0 and "1.290994" in res.stdout
