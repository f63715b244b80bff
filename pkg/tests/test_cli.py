import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from gmrk import problems
from gmrk.cli import CSV_HEADER, main
from gmrk.problems import PROBLEMS, ProblemSpec


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


def test_solve_naive_csv(capsys):
    code, out, _ = run_cli(capsys, "solve", "--steps", "1", "--grid", "4")
    assert code == 0
    header, rows = read_csv(out)
    assert header == CSV_HEADER
    assert rows.shape == (5, 6)
    # midpoint on x' = -x/2 with h = 1
    assert rows[-1, 1] == pytest.approx(0.625, rel=1e-15)
    assert np.isnan(rows[-1, 2])


def test_solve_continuation_check(capsys, tmp_path):
    out_file = tmp_path / "run.json"
    code, _, _ = run_cli(capsys, "solve", "--mode", "continuation", "--check", "--format", "json",
                         "--out", str(out_file))
    assert code == 0
    data = json.loads(out_file.read_text())
    assert data["columns"] == CSV_HEADER
    rows = np.array(data["rows"], dtype=float)
    ends = rows[::10, 2]
    assert np.all(np.diff(ends) >= -1e-12)


def test_solve_third_order_smoothing(capsys):
    code, out, _ = run_cli(capsys, "solve", "-p", "3", "--u", "0.5", "--v", "1", "--h", "0.5",
                           "--steps", "4", "--mode", "smoothing", "--problem", "cosmod")
    assert code == 0
    _, rows = read_csv(out)
    assert np.all(rows[:, 2] >= 0)


def test_solve_finite_tau(capsys):
    code, out, _ = run_cli(capsys, "solve", "--tau", "-100", "--steps", "2")
    assert code == 0
    assert run_cli(capsys, "solve", "--tau", "-100", "--mode", "smoothing")[0] == 2
    assert run_cli(capsys, "solve", "--tau", "5")[0] == 2


@pytest.mark.parametrize("argv", [
    ["solve", "--alpha", "0"],
    ["solve", "-p", "3", "--u", "0.6666666666666666"],
    ["solve", "--h", "0.3", "--steps", "0"],
    ["solve", "--mode", "sideways"],
    ["tableau", "-p", "4"],
    ["nonsense"],
])
def test_config_errors(capsys, argv):
    assert run_cli(capsys, *argv)[0] == 2


def test_tableau(capsys):
    code, out, _ = run_cli(capsys, "tableau", "-p", "3", "--u", "0.5", "--v", "1", "--format", "json",
                           "--check")
    assert code == 0
    data = json.loads(out)
    np.testing.assert_allclose(data["b"], [1 / 6, 2 / 3, 1 / 6], atol=1e-15)
    code, out, _ = run_cli(capsys, "tableau", "-p", "1")
    assert code == 0 and "ok" in out


def test_config_file_merges_under_flags(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"order": 1, "steps": 3, "h-list": [0.4, 0.2, 0.1]}))
    code, out, _ = run_cli(capsys, "solve", "--config", str(cfg), "--grid", "1")
    _, rows = read_csv(out)
    assert code == 0 and rows.shape[0] == 4
    assert rows[1, 1] == pytest.approx(0.5)
    code, out, _ = run_cli(capsys, "solve", "--config", str(cfg), "--steps", "2", "--grid", "1")
    assert read_csv(out)[1].shape[0] == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert run_cli(capsys, "solve", "--config", str(bad))[0] == 2
    assert run_cli(capsys, "solve", "--config", str(tmp_path / "missing.json"))[0] == 2


@pytest.mark.parametrize("order,params", [("1", []), ("2", ["--alpha", "0.5"]),
                                          ("3", ["--u", "0.5", "--v", "1"])])
def test_converge(capsys, order, params):
    code, out, _ = run_cli(capsys, "converge", "-p", order, *params, "--check")
    report = json.loads(out)
    assert code == 0 and report["passed"]
    assert abs(report["slope"] - (int(order) + 1)) < 0.2


def test_converge_se(capsys):
    code, out, _ = run_cli(capsys, "converge", "--kernel", "se", "--lengthscale", "2", "--check")
    assert code == 0
    assert json.loads(out)["order"] == 1


def test_compare_se(capsys):
    code, out, _ = run_cli(capsys, "compare-se", "--check", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert all(data["gmrk_wins"]) and data["deviation_decreasing"]
    se = [r for r in data["rows"] if r[1] == "se"]
    assert [r[0] for r in se] == [0.5, 1.0, 2.0, 4.0]


def test_numeric_failure_exit_code(capsys, monkeypatch):
    # the right-hand side turns non-finite after t = 2.5, the truth stays finite
    def build(p):
        f = lambda x, t: np.nan if t > 2.5 else -x
        return f, lambda t, t0, x0: x0 * np.exp(-(np.asarray(t) - t0))
    monkeypatch.setitem(PROBLEMS, "brittle", ProblemSpec("brittle", {"x0": 1.0}, build))
    monkeypatch.setattr(problems, "check_truth", lambda *a, **k: 0.0)
    code, _, err = run_cli(capsys, "solve", "--problem", "brittle", "--steps", "4")
    assert code == 3 and "numeric failure" in err


def test_overflowing_truth_rejected(capsys):
    code, _, err = run_cli(capsys, "solve", "--lam", "1e308", "--steps", "3")
    assert code == 2 and "truth" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gmrk.cli", "tableau", "-p", "2", "--alpha", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ok" in proc.stdout
