import json

import pytest

from treerwre.xlab.cli import build_parser, main


def test_parser_has_all_subcommands():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) >= {"classify", "rho-scan", "barrier-scan", "walk", "xstar", "oracle-check", "phi-star",
                        "accept"}


def test_classify(capsys):
    assert main(["classify"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["tag"] == "NullRecurrentSlow"


def test_oracle_check(capsys, tmp_path):
    assert main(["oracle-check", "--depth", "3", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "oracle_check.json").read_text())
    assert max(r["rho_diff"] for r in rows) < 1e-10


def test_barrier_scan_with_config(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("spec: {b: 2, family: {name: constant, a: 0.5}}\nseeds: [0]\nschedule: [4, 8, 16]\n")
    assert main(["barrier-scan", "--config", str(cfg), "--budget-nodes", "1e6"]) == 0
    assert "'slope': 1.0" in capsys.readouterr().out


def test_rho_scan_and_xstar(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("spec: {b: 2, family: {name: critical_two_point}}\nschedule: [2, 4, 6]\n")
    assert main(["rho-scan", "--config", str(cfg), "--seed", "3"]) == 0
    assert main(["xstar", "--steps", "20000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "xstar.csv").exists()


def test_phi_star(tmp_path):
    assert main(["phi-star", "--grid-size", "256", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "phi_star.csv").read_text().splitlines()[2] == "t,phi,neg_log_phi"


def test_accept_subset(tmp_path, capsys):
    assert main(["accept", "--only", "2,6", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "acceptance.json").read_text())
    assert [set(r) for r in report] == [{"criterion", "measured", "tolerance", "verdict"}] * 2
    assert all(r["verdict"] == "pass" for r in report)


def test_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("spec: {b: 2, family: {name: critical_two_point}}\nschedule: [8]\n")
    assert main(["barrier-scan", "--config", str(cfg)]) == 2
