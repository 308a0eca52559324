import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mcisac import experiments as ex
from mcisac.cli import main
from mcisac.covariance import TradeoffPoint

SMALL = {
    "n_tx": 4, "n_rx": 4, "n_users": 2, "power_dbm": 10.0, "block_len": 32,
    "targets": {"angles_deg": [10.0]}, "seed": 5,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def _read(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_parse_grid():
    np.testing.assert_allclose(ex.parse_grid("0:0.5:2"), [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(ex.parse_grid("16:16:128"), [16, 32, 48, 64, 80, 96, 112, 128])
    for bad in ("1:0:2", "3:1:1", "a:b"):
        with pytest.raises(ex.SpecError):
            ex.parse_grid(bad)


def test_spec_validation():
    with pytest.raises(ex.SpecError):
        ex.ExperimentSpec("tradeoff", 1, ("magic",), [1.0])
    with pytest.raises(ex.SpecError):
        ex.ExperimentSpec("tradeoff", 1, (), [2.0, 1.0])
    with pytest.raises(ex.SpecError):
        ex.ExperimentSpec("tradeoff", 3, (), [1.0])
    assert ex.ExperimentSpec("power_sweep", 1, (), [0.0]).methods == ex.DEFAULT_METHODS["power_sweep"]


def test_dominance_violations_detects_order():
    pts = [TradeoffPoint(1.0, 1.0, 2.0, None, 1, "optimal_cov"), TradeoffPoint(1.0, 1.0, 1.0, None, 1, "joint_bf_cancel")]
    assert len(ex.dominance_violations(pts)) == 1
    pts[0].crb = 0.5
    assert ex.dominance_violations(pts) == []


def test_tradeoff_cli_rows_and_determinism(cfg_path, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["tradeoff", "--config", cfg_path, "--grid", "0.5:0.5:1.5"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _read(a)
    assert list(rows[0].keys()) == list(TradeoffPoint.CSV_COLUMNS)
    methods = [r["method"] for r in rows]
    assert methods[:2] == ["corner_capacity", "corner_sensing"]
    assert methods.count("optimal_cov") == 3 and methods.count("isotropic") == 1
    opt = [float(r["crb"]) for r in rows if r["method"] == "optimal_cov"]
    assert np.all(np.diff(opt) >= -1e-9 * np.array(opt[:-1]))
    assert all(r["solver_status"] for r in rows)


def test_infeasible_point_exit_code(cfg_path, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["tradeoff", "--config", cfg_path, "--grid", "50:1:50", "--methods", "optimal_cov",
                 "--out", str(out)]) == 2
    row = [r for r in _read(out) if r["method"] == "optimal_cov"][0]
    assert row["solver_status"] == "infeasible" and row["crb"] == "inf"


def test_error_exit_code(tmp_path, capsys):
    assert main(["tradeoff", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["tradeoff", "--methods", "nope"]) == 1
    assert main(["no-such-verb"]) == 1


def test_power_sweep_cli(cfg_path, tmp_path):
    out = tmp_path / "p.csv"
    assert main(["power-sweep", "--config", cfg_path, "--grid", "0:10:10", "--out", str(out)]) == 0
    rows = _read(out)
    assert list(rows[0].keys()) == list(ex.POWER_COLUMNS)
    assert len(rows) == 6
    for p in ("0", "10"):
        d = {r["method"]: float(r["crb"]) for r in rows if r["power_dbm"] == p}
        assert d["optimal_cov"] <= d["joint_bf_cancel"] * (1 + 1e-6) <= d["joint_bf_nocancel"] * (1 + 1e-6) ** 2


def test_rmse_cli_outputs(cfg_path, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["rmse", "--config", cfg_path, "--grid", "0:10:10", "--trials", "10", "--out", str(out)]) == 0
    rows = _read(out)
    assert list(rows[0].keys()) == list(ex.RMSE_COLUMNS)
    assert {r["method"] for r in rows} == {"optimal_cov", "beampattern"}
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["schema"] == 1 and doc["seed"] == 5 and len(doc["points"]) == 4
    assert doc["config"]["n_tx"] == 4


def test_rmse_length_sweep_scenario2(cfg_path, tmp_path):
    out = tmp_path / "l.csv"
    assert main(["rmse", "--scenario", "2", "--sweep", "length", "--config", cfg_path, "--grid", "16:16:32",
                 "--trials", "5", "--caml-grid", "201", "--methods", "optimal_cov", "--out", str(out)]) == 0
    rows = _read(out)
    assert [r["parameter"] for r in rows] == ["angle", "amplitude"] * 2
    assert [r["sweep_var"] for r in rows] == ["16", "16", "32", "32"]


def test_corner_verbs(cfg_path, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["capacity", "--config", cfg_path, "--out", str(out)]) == 0
    assert _read(out)[0]["method"] == "corner_capacity"
    assert main(["sensing-only", "--scenario", "1", "--config", cfg_path, "--out", str(out)]) == 0
    row = _read(out)[0]
    # isotropic corner: N_r N_t^2 sigma^2 / (L P)
    assert float(row["crb"]) == pytest.approx(4 * 16 / (32 * 10.0))


def test_module_entry_point(cfg_path, tmp_path):
    out = tmp_path / "m.csv"
    r = subprocess.run([sys.executable, "-m", "mcisac", "sensing-only", "--config", cfg_path, "--out", str(out)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert out.exists()
