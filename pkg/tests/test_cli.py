import json

import pandas as pd
import pytest

from navsim.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_SYNTHESIS, main
from navsim.services.simulation import NRHO_SCENARIO_PATH, RUN_COLUMNS, save_gain


@pytest.fixture
def short_scenario_file(tmp_path):
    payload = json.loads(NRHO_SCENARIO_PATH.read_text())
    payload["duration_tu"] = 0.02
    payload["settle_time_tu"] = 0.01
    path = tmp_path / "short.json"
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture
def gain_file(tmp_path, quick_gain):
    path = tmp_path / "gain.json"
    save_gain(quick_gain, path)
    return path


def test_propagate(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code = main(["propagate", "--scenario", str(NRHO_SCENARIO_PATH), "--out", str(out),
                 "--method", "rk4", "--duration", "0.01"])
    assert code == EXIT_OK
    assert len(pd.read_csv(out)) == 11
    assert "[Propagate] Relative Jacobi drift" in capsys.readouterr().out


def test_simulate_then_analyze(tmp_path, short_scenario_file, gain_file, capsys):
    out, summary = tmp_path / "run.csv", tmp_path / "summary.json"
    code = main(["simulate", "--scenario", str(short_scenario_file), "--gain", str(gain_file),
                 "--out", str(out), "--seed", "4", "--summary", str(summary)])
    assert code == EXIT_OK
    assert list(pd.read_csv(out).columns) == RUN_COLUMNS
    assert json.loads(summary.read_text())["samples"] == 21

    capsys.readouterr()
    assert main(["analyze", str(out), "--settle-time", "0.01", "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == json.loads(summary.read_text())


def test_montecarlo_writes_summary(tmp_path, short_scenario_file, gain_file):
    out_dir = tmp_path / "mc"
    code = main(["montecarlo", "--scenario", str(short_scenario_file), "--gain", str(gain_file),
                 "--runs", "2", "--out", str(out_dir)])
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["n_runs"] == 2
    assert sorted(p.name for p in out_dir.glob("run_*.csv")) == ["run_000.csv", "run_001.csv"]


def test_bad_scenario_exits_with_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"param_box": {"r2_min": 0.5, "r2_max": 0.1}}')
    assert main(["propagate", "--scenario", str(bad), "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIG
    assert "param_box" in capsys.readouterr().err


def test_infeasible_synthesis_exits_with_synthesis_error(tmp_path):
    payload = json.loads(NRHO_SCENARIO_PATH.read_text())
    payload["synthesis"] = {
        "synthesis_grid": [2, 2],
        "validation_grid": [2, 2],
        "restarts": 1,
        "max_iterations": 1,
        "convergence_tol": 0.4,
        "max_pole_magnitude": 0.001,
    }
    path = tmp_path / "infeasible.json"
    path.write_text(json.dumps(payload))
    assert main(["synthesize", "--scenario", str(path), "--out", str(tmp_path / "g.json")]) == EXIT_SYNTHESIS
    assert not (tmp_path / "g.json").exists()


def test_analyze_rejects_bad_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x\n0,1\n")
    assert main(["analyze", str(bad)]) == EXIT_RUNTIME


def test_missing_gain_file_is_a_config_error(tmp_path, short_scenario_file):
    code = main(["simulate", "--scenario", str(short_scenario_file), "--gain", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "run.csv")])
    assert code == EXIT_CONFIG
