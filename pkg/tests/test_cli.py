import json

import pytest

from fracstrat.cli import main


def test_poly_gen_and_verify(tmp_path, capsys):
    assert main(["poly", "gen", "p.txt", "--k", "3", "--a", "0.5", "--m", "3", "--out", str(tmp_path)]) == 0
    path = tmp_path / "p.txt"
    assert path.read_text().startswith("n=2 d=3")
    assert main(["poly", "verify", str(path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_poly_verify_reports_nonzero_residual(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("n=1 d=2 a=0.5 k_sym=0\n1 2 0\n1 0 2\n")
    assert main(["poly", "verify", str(path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_poly_verify_bad_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("garbage\n")
    assert main(["poly", "verify", str(path)]) == 2
    assert main(["poly", "verify"]) == 2


def test_poly_critical(capsys):
    assert main(["poly", "critical", "--k", "4", "--a", "-0.5"]) == 0
    assert "ISOLATED" in capsys.readouterr().out
    assert main(["poly", "critical", "--k", "2", "--a", "1.5"]) == 2


def test_solve_builtin_x1sq(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[problem]\ngamma = 0.25\ndata = builtin:example-x1sq\n[grid]\nh = 1/16\n")
    out = tmp_path / "run"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("solution.bin", "grid.txt", "trace.csv", "checks.jsonl"):
        assert (out / name).exists()
    rec = json.loads((out / "checks.jsonl").read_text().splitlines()[-1])
    assert rec["passed"]


def test_bad_config_exits_with_usage_code(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[problem]\na = 0.5\n")
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "c.ini:2:" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "none.ini")]) == 2


def test_coarse_grid_exits_with_usage_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[grid]\nh = 0.5\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("argv", [["report", "x", "--only", "99"], ["launch"], [], ["solve"]])
def test_usage_errors(tmp_path, argv):
    if argv[:1] == ["report"]:
        argv[1] = str(tmp_path)
    assert main(argv) == 2


def test_report_without_runs_lists_not_run(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "NOT RUN" in capsys.readouterr().out
