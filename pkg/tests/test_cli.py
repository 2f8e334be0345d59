import json

import numpy as np
import pytest

from axiharm.cli import (EXIT_BAD_INPUT, EXIT_OK, bundled_config, load_checkpoint, main)
from axiharm.config import parse_config
from axiharm.geometry import GaugeIsometry

TWO_GAP = """\
output = "two"

[rods]
gaps = [[-3.0, -1.0], [1.0, 3.0]]

[constants]
v = {v}
psi = {psi}

[grid]
h = 0.5
grading = 1.15
min_gap_cells = 4

[solver]
tol = 1e-9
R_schedule = [24.0, 48.0, 96.0]
"""


def two_gap_text(v=(0.3, -0.2, 0.5), psi=((0.2,), (-0.4,), (0.1,))):
    return TWO_GAP.format(v=list(v), psi=[list(r) for r in psi])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def schwarzschild_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("schw")
    assert main(["-q", "solve", "--config", "schwarzschild", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def two_gap_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("two")
    cfg = base / "two.toml"
    cfg.write_text(two_gap_text())
    out = base / "run"
    assert main(["-q", "solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return cfg, out


def test_bundled_schwarzschild_is_trivial(schwarzschild_run):
    rep = load(schwarzschild_run / "report.json")
    assert rep["status"] == "ok"
    assert rep["conical"]["bounded"] == []
    assert all(r["sup_u_reg"] <= 1e-8 and r["sup_v"] <= 1e-8 for r in rep["runs"])
    assert all(r["solve"]["converged"] for r in rep["runs"])
    for name in ("sigma_rays.csv", "metric.csv", "fields.csv", "checkpoint_R2.npz"):
        assert (schwarzschild_run / name).is_file()


def test_two_gap_report_contents(two_gap_run):
    rep = load(two_gap_run[1] / "report.json")
    assert rep["free_parameters"] == 4
    assert rep["cauchy_decreasing"]
    assert rep["uniformity"]["bounded"] and rep["uniformity"]["no_growth"]
    (strut,) = rep["conical"]["bounded"]
    assert abs(strut["b"]) > 1e-2 and not strut["regular"]
    assert all(e["regular"] for e in rep["conical"]["unbounded"])
    assert rep["reconstruction"]["det_identity_error"] < 1e-12


def test_reports_are_deterministic(two_gap_run, tmp_path):
    cfg, out = two_gap_run
    again = tmp_path / "run"
    assert main(["-q", "solve", "--config", str(cfg), "--out", str(again)]) == EXIT_OK
    a, b = load(out / "report.json"), load(again / "report.json")
    a["config"].pop("output")
    b["config"].pop("output")
    assert a == b
    for name in ("metric.csv", "fields.csv", "sigma_rays.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_report_and_reconstruct_rebuild_from_checkpoints(two_gap_run, tmp_path):
    _, out = two_gap_run
    before = (out / "report.json").read_bytes()
    assert main(["-q", "report", "--out", str(out)]) == EXIT_OK
    assert (out / "report.json").read_bytes() == before
    assert main(["-q", "reconstruct", "--out", str(out)]) == EXIT_OK
    rec = load(out / "reconstruction.json")
    assert rec["conical"] == load(out / "report.json")["conical"]


def test_checkpoint_round_trip(two_gap_run):
    cfg_path, out = two_gap_run
    cfg, state, rep = load_checkpoint(out / "checkpoint_R0.npz")
    assert cfg.text == cfg_path.read_text()
    assert state.k == 1 and state.R == 24.0
    assert rep["converged"] and state.residual <= 1e-9


def test_gauge_shifted_constants_give_same_conical_report(two_gap_run, tmp_path):
    # constants moved by a gauge isometry describe the same configuration
    spec = parse_config(two_gap_text(), announce=False).spec
    moved_spec = spec.transformed(GaugeIsometry(np.zeros(1), np.array([-0.2]), 0.7))
    assert np.all(moved_spec.chi == 0)
    moved = two_gap_text(v=moved_spec.v.tolist(), psi=moved_spec.psi.tolist())
    p = tmp_path / "moved.toml"
    p.write_text(moved)
    assert main(["-q", "solve", "--config", str(p), "--out", str(tmp_path / "run")]) == EXIT_OK
    a = load(two_gap_run[1] / "report.json")["conical"]
    b = load(tmp_path / "run" / "report.json")["conical"]
    for ea, eb in zip(a["bounded"] + a["unbounded"], b["bounded"] + b["unbounded"]):
        assert eb["b"] == pytest.approx(ea["b"], abs=1e-9)


def test_bad_config_exits_2_with_line(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(two_gap_text().replace("[[-3.0, -1.0], [1.0, 3.0]]", "[[-3.0, -1.0], [-2.0, 3.0]]"))
    assert main(["-q", "solve", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_BAD_INPUT
    err = capsys.readouterr().err
    assert "line 4:" in err and "overlap" in err


def test_missing_checkpoints_and_unknown_config_exit_2(tmp_path, capsys):
    assert main(["-q", "report", "--out", str(tmp_path)]) == EXIT_BAD_INPUT
    assert "no checkpoints" in capsys.readouterr().err
    assert main(["-q", "solve", "--config", "nosuch", "--out", str(tmp_path)]) == EXIT_BAD_INPUT


def test_bad_flag_values_exit_2(tmp_path):
    args = ["-q", "solve", "--config", "schwarzschild", "--out", str(tmp_path)]
    assert main(args + ["--R-schedule", "16,abc"]) == EXIT_BAD_INPUT
    assert main(args + ["--R-schedule", "0.5,16"]) == EXIT_BAD_INPUT


def test_bundled_config_parses():
    cfg = parse_config(bundled_config("schwarzschild"), announce=False)
    assert cfg.params.R_schedule == (16.0, 32.0, 64.0)


def test_help_mentions_config_keys(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "R_schedule" in out and "AXIHARM_THREADS" in out


@pytest.mark.slow
def test_validate_suites_pass(tmp_path):
    assert main(["-q", "validate", "--out", str(tmp_path)]) == EXIT_OK
    rep = load(tmp_path / "validate.json")
    assert {s["name"] for s in rep["suites"]} == {"tension", "distance", "schwarzschild", "kerr"}
