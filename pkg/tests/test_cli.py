import json

import pytest
import yaml

from higgslab.cli_runner import ConfigProblem, load_config, main, run, validate


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    if name.endswith(".json"):
        p.write_text(json.dumps(cfg))
    else:
        p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return p


CRIT = {"command": "spectra", "grid": {"n": 16}, "model": {"degrees": [1, -1]},
        "experiment": {"checks": ["critical"], "critical": [[1, -1], [2, -2]]}, "figures": False}


def test_calibrate_passes(tmp_path):
    cfg = {"command": "calibrate", "grid": {"n": 16}, "experiment": {"m_min": -1, "m_max": 1}}
    p = _write(tmp_path, cfg)
    assert main(["calibrate", "--config", str(p), "--out", str(tmp_path / "out")]) == 0
    doc = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert doc["passed"] and len(doc["runs"][0]["rows"]) == 3
    assert (tmp_path / "out" / "figures" / "run_calibration.png").exists()


def test_negative_tolerance_is_config_error(tmp_path, capsys):
    cfg = {"command": "calibrate", "grid": {"n": 16}, "experiment": {"degree_tol": -1.0}}
    p = _write(tmp_path, cfg)
    assert main(["calibrate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "experiment.degree_tol" in err and "line" in err


def test_unknown_key_and_command_mismatch(tmp_path):
    p = _write(tmp_path, {"command": "calibrate", "grid": {"n": 16, "m": 3}})
    assert main(["calibrate", "--config", str(p)]) == 1
    p = _write(tmp_path, {"command": "flow", "grid": {"n": 16}})
    assert main(["calibrate", "--config", str(p)]) == 1


def test_bad_grid_is_config_error(tmp_path):
    p = _write(tmp_path, {"command": "calibrate", "grid": {"n": 15}})
    assert main(["calibrate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_yaml_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("command: calibrate\ngrid: {n: 16\n")
    with pytest.raises(ConfigProblem) as e:
        load_config(p)
    assert e.value.line is not None


def test_json_config(tmp_path):
    p = _write(tmp_path, CRIT, "c.json")
    assert main(["spectra", "--config", str(p), "--out", str(tmp_path / "o")]) == 0


def test_summary_is_deterministic(tmp_path):
    a, _ = run(dict(CRIT), tmp_path / "a")
    b, _ = run(dict(CRIT), tmp_path / "b")
    assert a == b == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert (tmp_path / "a" / "run_critical.csv").read_bytes() == (tmp_path / "b" / "run_critical.csv").read_bytes()


def test_seeded_flow_trace_and_failure_status(tmp_path):
    cfg = {"command": "flow", "seed": 5, "grid": {"n": 16}, "model": {"degrees": [1, -1]},
           "experiment": {"class_rule": "random", "amplitude": 0.2, "t_max": 0.05,
                          "expect_limit": [0, 0], "polish": False}, "figures": False}
    s1, d1 = run(dict(cfg), tmp_path / "a")
    s2, d2 = run(dict(cfg), tmp_path / "b", seed=5)
    assert s1 == 2 and d1 == d2
    header = (tmp_path / "a" / "run_trace.csv").read_text().splitlines()[0]
    assert header == "t,energy,grad_norm,spec_1,spec_2,sup_sigma,hol_residual"
    assert (tmp_path / "a" / "run_trace.csv").read_bytes() == (tmp_path / "b" / "run_trace.csv").read_bytes()
    s3, d3 = run(dict(cfg), tmp_path / "c", seed=6)
    assert d3 != d1


def test_validate_runs_list():
    with pytest.raises(ConfigProblem):
        validate({"command": "flow", "runs": []})
    with pytest.raises(ConfigProblem):
        validate({"command": "flow", "runs": [{"experiment": {"nope": 1}}]})
    with pytest.raises(ConfigProblem):
        validate({"command": "flow", "seed": -1})


@pytest.mark.parametrize("path", ["calibrate", "critical_points", "gradient", "flow_limits",
                                  "quadratic", "distance_decreasing", "scatter_convergence",
                                  "reverse_flow", "round_trip", "hecke_single_point",
                                  "secant_criterion", "kernel_rank"])
def test_shipped_configs_validate(path):
    from pathlib import Path
    cfg, lines = load_config(Path(__file__).parent.parent / "configs" / f"{path}.yaml")
    validate(cfg, lines)
