import csv
import json

import numpy as np
import pytest

from calderon_lab import cli, gridio
from calderon_lab import forward as fw
from calderon_lab.experiments import gaussian_delta

SMALL_LINRECON = ["--grid-n", "20", "--K", "2", "--set", "exp_cap_volume=6", "--set", "exp_cap_dtn=6"]


def read_report(d):
    with open(d / "report.csv") as fh:
        return list(csv.DictReader(fh))


def test_verify_algebra_defaults(tmp_path, capsys):
    assert cli.main(["verify-algebra", "--out", str(tmp_path)]) == 0
    rows = read_report(tmp_path)
    assert len(rows) >= 6
    assert all(r["status"] == "pass" for r in rows)
    assert all(r["identity"] for r in rows)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["command"] == "verify-algebra"
    assert "[pass]" in capsys.readouterr().out


def test_zero_cutoff_is_a_config_error(tmp_path):
    assert cli.main(["linrecon", "--K", "0", "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "report.csv").exists()


@pytest.mark.parametrize("args", [
    ["--set", "no_such_key=1"],
    ["--set", "dump_grids=maybe"],
    ["--set", "cg_tol=-1"],
    ["--set", "seed"],
    ["--threads", "0"],
    ["--config", "/nonexistent/run.ini"],
])
def test_config_errors_exit_2(tmp_path, args):
    assert cli.main(["verify-algebra", "--out", str(tmp_path)] + args) == 2


def test_tolerance_breach_exits_1(tmp_path):
    assert cli.main(["verify-algebra", "--out", str(tmp_path), "--set", "algebra_rtol=1e-300"]) == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert not summary["passed"] and summary["failed_checks"]


def test_nonconvergence_exits_3(tmp_path):
    args = ["alessandrini", "--out", str(tmp_path), "--grid-n", "16",
            "--set", "fd_grid_n=12", "--set", "cg_maxiter=2", "--set", "cg_precondition=none"]
    assert cli.main(args) == 3


def test_config_file_sections_and_overrides(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nseed = 7\nthreads = 2\n[verify-algebra]\nn_cases = 500\nseed = 8\n")
    cfg = cli.resolve_config("verify-algebra", str(ini), ["seed=9"])
    assert cfg["seed"] == 9 and cfg["threads"] == 2 and cfg["n_cases"] == 500
    cfg = cli.resolve_config("verify-algebra", str(ini))
    assert cfg["seed"] == 8


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["verify-algebra", "--set", "n_cases=200"]) == 0
    assert (tmp_path / "env" / "report.csv").exists()
    assert cli.main(["verify-algebra", "--set", "n_cases=200", "--set", f"output_dir={tmp_path / 'cfg'}"]) == 0
    assert (tmp_path / "cfg" / "report.csv").exists()
    monkeypatch.delenv(cli.ENV_OUT)
    assert cli.main(["verify-algebra", "--set", "n_cases=200"]) == 0
    assert (tmp_path / "calderon_out" / "report.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["linrecon", "--route", "both", "--out", str(tmp_path / d), "--threads", "2"] + SMALL_LINRECON) in (0, 1)
    for name in ("report.csv", "summary.json", "spectrum.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_grid_dumps_and_file_scenario(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["linrecon", "--out", str(out), "--set", "dump_grids=true"] + SMALL_LINRECON) in (0, 1)
    rec, grid, kind = gridio.read_grid(out / "delta_rec_volume.grid")
    assert kind == "scalar" and rec.shape == (20, 20, 20)
    g = fw.ball_grid(20)
    gridio.write_grid(tmp_path / "delta.grid", gaussian_delta(g.coords()), g, "scalar")
    out2 = tmp_path / "file"
    args = ["linrecon", "--out", str(out2), "--scenario", "file", "--set", f"delta_path={tmp_path / 'delta.grid'}"]
    assert cli.main(args + SMALL_LINRECON) in (0, 1)
    a = json.loads((out / "summary.json").read_text())
    b = json.loads((out2 / "summary.json").read_text())
    assert a["error_L2_rel"] == pytest.approx(b["error_L2_rel"], rel=1e-12)
    assert cli.main(["linrecon", "--out", str(out2), "--scenario", "file"]) == 2


def test_summary_has_reconstruction_fields(tmp_path):
    assert cli.main(["linrecon", "--out", str(tmp_path)] + SMALL_LINRECON) in (0, 1)
    s = json.loads((tmp_path / "summary.json").read_text())
    for key in ("K", "L", "eps", "error_L2_rel", "dropped_k_count"):
        assert key in s
    rows = list(csv.reader(open(tmp_path / "spectrum.csv")))
    assert rows[0] == ["k1", "k2", "k3", "Re", "Im", "route", "cond"]
    assert np.isfinite(float(rows[1][3]))
