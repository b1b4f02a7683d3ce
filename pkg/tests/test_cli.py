import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from qtraj.cli import (EXIT_BLOWUP, EXIT_CHECKS, EXIT_CONFIG, EXIT_OK, EXIT_PRECONDITION, SCHEMA_VERSION,
                       ConfigError, ScenarioConfig, format_config, main, run_scenario, validate_config)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_TDQM = """\
scenario = tdqm-run
potential.kind = free
initial.p0 = 1.0
grid.n_c = 41
grid.epsilon = 0.05
stepping.t_final = 0.2
stepping.snapshot_stride = 5
"""


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("QTRAJ_OUT", str(tmp_path / "out"))
    return tmp_path / "out"


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_config_gets_defaults():
    cfg = validate_config("potential.kind = free\n")
    assert cfg == ScenarioConfig()
    assert cfg.grid.n_c == 201 and cfg.grid.epsilon == 0.02 and cfg.scenario == "tdqm-run"
    assert cfg.physical().mass == 1.0


def test_epsilon_range_error_names_bound():
    with pytest.raises(ConfigError) as info:
        validate_config("grid.epsilon = 0.6\n")
    assert any("(0, 0.5)" in e and "grid.epsilon" in e for e in info.value.errors)


def test_negative_mass_is_rejected():
    with pytest.raises(ConfigError) as info:
        validate_config("params.mass = -1\n")
    assert any("params.mass" in e and "positive" in e for e in info.value.errors)


def test_all_errors_are_collected():
    text = "params.mass = -1\ngrid.epsilon = 0.6\ngrid.n_c = abc\nbogus.key = 1\nnot a pair\n"
    with pytest.raises(ConfigError) as info:
        validate_config(text)
    errs = info.value.errors
    assert len(errs) == 5
    assert any("line 3" in e for e in errs) and any("line 5" in e for e in errs)


def test_json_matches_flat_text():
    flat = validate_config("scenario = analytic-check\ngrid.n_c = 51\nanalytic.levels = 51, 101\n")
    nested = validate_config(json.dumps({"scenario": "analytic-check", "grid": {"n_c": 51},
                                         "analytic": {"levels": [51, 101]}}))
    dotted = validate_config(json.dumps({"scenario": "analytic-check", "grid.n_c": 51, "analytic.levels": "51,101"}))
    assert flat == nested == dotted


def test_bad_json_reports_line():
    with pytest.raises(ConfigError, match="JSON parse error at line 2"):
        validate_config('{"grid.n_c": 5,\n oops}')


def test_resolved_config_round_trips():
    cfg = validate_config((CONFIGS / "eckart_scan.cfg").read_text())
    assert validate_config(format_config(cfg)) == cfg


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_validate(name, capsys):
    assert main(["validate", str(CONFIGS / name)]) == EXIT_OK
    assert "scenario = " in capsys.readouterr().out


def test_validate_exit_code_on_error(tmp_path, capsys):
    assert main(["validate", write(tmp_path, "grid.epsilon = 0.6\n")]) == EXIT_CONFIG
    assert "grid.epsilon" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_tdqm_run_writes_outputs(tmp_path, out):
    assert main(["run", write(tmp_path, SMALL_TDQM), "--strict"]) == EXIT_OK
    d = out / "tdqm-run"
    s = json.loads((d / "summary.json").read_text())
    assert s["schema_version"] == SCHEMA_VERSION and s["status"] == "ok"
    assert s["checks"]["trajectories_vs_analytic"]["pass"]
    assert s["metrics"]["max_error_vs_analytic"] <= 1e-6
    for f in ("config.resolved", "snapshots.csv", "balance.csv", "density.csv", "density.dat"):
        assert (d / f).exists(), f
    assert validate_config((d / "config.resolved").read_text()) == validate_config(SMALL_TDQM)
    rows = list(csv.reader((d / "snapshots.csv").open()))
    assert rows[0] == ["t", "C", "x", "v", "xprime", "energy_density"]
    assert float(rows[1][2]) == float(repr(float(rows[1][2])))


def test_tdqm_run_is_deterministic(tmp_path):
    cfg = validate_config(SMALL_TDQM)
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    for f in ("snapshots.csv", "balance.csv", "density.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_strict_flag_reports_failed_checks(tmp_path, out):
    text = SMALL_TDQM + "tolerances.max_error = 1e-30\n"
    assert main(["run", write(tmp_path, text)]) == EXIT_OK
    assert main(["run", write(tmp_path, text), "--strict"]) == EXIT_CHECKS


def test_blowup_exit_code(tmp_path, out):
    # V = -5 x^4 flings the outer trajectories away in finite time
    text = ("potential.kind = polynomial\npotential.coefficients = 0,0,0,0,-5\ngrid.n_c = 41\n"
            "grid.epsilon = 0.05\nstepping.t_final = 5.0\n")
    assert main(["run", write(tmp_path, text)]) == EXIT_BLOWUP
    s = json.loads((out / "tdqm-run" / "summary.json").read_text())
    assert s["error"]["category"] == "blowup"
    assert s["last_good_t"] == 0.0
    assert Path(s["last_good_snapshot"]).exists()


def test_precondition_exit_code(tmp_path, out):
    text = "scenario = analytic-check\npotential.kind = eckart\nanalytic.levels = 21, 41\n"
    assert main(["run", write(tmp_path, text)]) == EXIT_PRECONDITION
    s = json.loads((out / "analytic-check" / "summary.json").read_text())
    assert s["error"]["category"] == "precondition"


def test_analytic_check_scenario(tmp_path, out):
    text = "scenario = analytic-check\ninitial.p0 = 1.0\ngrid.coordinate = uniform\nanalytic.levels = 101, 201\n"
    assert main(["run", write(tmp_path, text), "--strict"]) == EXIT_OK
    rows = list(csv.DictReader((out / "analytic-check" / "convergence.csv").open()))
    assert [int(r["n_c"]) for r in rows] == [101, 201]
    assert float(rows[1]["ratio_energy"]) >= 3.5


def test_tise_scatter_scenario(tmp_path, out):
    text = ("scenario = tise-scatter\npotential.kind = eckart\npotential.v0 = 1.0\n"
            "scatter.energies = 0.5, 1.5\nscatter.step = 0.1\nscatter.tol = 1e-10\n")
    assert main(["run", write(tmp_path, text), "--strict"]) == EXIT_OK
    s = json.loads((out / "tise-scatter" / "summary.json").read_text())
    assert s["metrics"]["max_T_rel_error"] <= 1e-8
    assert s["metrics"]["n_energies"] == 2


def test_manyd_scenario(tmp_path, out):
    text = "scenario = manyd-run\ninitial.p0 = 1.0\nmanyd.n_c = 21\nmanyd.a = 1.3\nstepping.t_final = 0.2\n"
    assert main(["run", write(tmp_path, text), "--strict"]) == EXIT_OK
    s = json.loads((out / "manyd-run" / "summary.json").read_text())
    assert s["checks"]["detJ_positive"]["pass"] and s["checks"]["separability"]["pass"]


def test_oracle_compare_scenario(tmp_path, out):
    text = ("scenario = oracle-compare\npotential.kind = eckart\npotential.v0 = 0.5\ninitial.x0 = -8.0\n"
            "initial.p0 = 2.0\ngrid.n_c = 101\nstepping.t_final = 0.5\noracle.x_min = -40\noracle.x_max = 40\n"
            "oracle.n_x = 2048\noracle.dt = 0.005\n")
    main(["run", write(tmp_path, text)])
    s = json.loads((out / "oracle-compare" / "summary.json").read_text())
    assert s["status"] == "ok"
    assert s["metrics"]["overlap"] > 0.99


def test_sweep(tmp_path, out):
    path = write(tmp_path, SMALL_TDQM)
    assert main(["sweep", path, "--param", "initial.p0", "--values", "0.5,1.0"]) == EXIT_OK
    rows = list(csv.DictReader((out / "tdqm-run" / "sweep.csv").open()))
    assert [r["initial.p0"] for r in rows] == ["0.5", "1.0"]
    assert (out / "tdqm-run" / "initial.p0=0.5" / "config.resolved").exists()
    assert main(["sweep", path, "--param", "grid.epsilon", "--values", "0.7"]) == EXIT_CONFIG


def test_console_entry_point(tmp_path):
    env = dict(os.environ, QTRAJ_OUT=str(tmp_path))
    r = subprocess.run([sys.executable, "-m", "qtraj.cli", "validate", str(CONFIGS / "free_gaussian.cfg")],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and "grid.n_c = 401" in r.stdout
