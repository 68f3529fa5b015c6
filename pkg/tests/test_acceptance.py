"""The twelve acceptance experiments, each driven by its shipped config.

Every test records one line in ACCEPTANCE; conftest prints them as a block
at the end of the session.
"""
import math
import time
from pathlib import Path

import pytest

from higgslab.cli_runner import load_config, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ACCEPTANCE = {}


def _run(name, tmp_path):
    cfg, lines = load_config(CONFIGS / f"{name}.yaml")
    t0 = time.perf_counter()
    status, doc = run(cfg, tmp_path / name, lines=lines)
    return status, doc, time.perf_counter() - t0


def _record(k, ok, detail):
    ACCEPTANCE[k] = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[k])
    assert ok, ACCEPTANCE[k]


def test_01_calibration(tmp_path):
    status, doc, dt = _run("calibrate", tmp_path)
    rows = doc["runs"][0]["rows"]
    worst = max(r["degree_error"] for r in rows)
    dims = [r["kernel_dim"] for r in rows]
    _record(1, status == 0 and dt < 30.0,
            f"max degree error {worst:.1e}, kernel dims {dims}, {dt:.1f} s")


def test_02_critical_points(tmp_path):
    status, doc, dt = _run("critical_points", tmp_path)
    rows = doc["runs"][0]["critical"]
    worst = max(r["energy_rel_error"] for r in rows)
    gmax = max(r["grad_norm"] for r in rows)
    _record(2, status == 0, f"{len(rows)} critical points, max |grad| {gmax:.1e}, "
                            f"max energy rel error {worst:.1e}")


def test_03_gradient(tmp_path):
    status, doc, dt = _run("gradient", tmp_path)
    g = doc["runs"][0]["gradient"]
    _record(3, status == 0, f"max FD error {max(g['fd_errors']):.1e}, "
                            f"unitary rel error {g['unitary_rel_error']:.1e}")


@pytest.mark.slow
def test_04_flow_limits(tmp_path):
    status, doc, dt = _run("flow_limits", tmp_path)
    runs = {r["name"]: r for r in doc["runs"]}
    parts = [f"{k}: limit {r.get('limit')} |grad| {r['grad_norm']:.1e} E {r['energy']:.2e}"
             for k, r in runs.items()]
    # both runs share one call; the per-run budget is 5 min
    _record(4, status == 0 and dt < 2 * 300.0, "; ".join(parts) + f"; {dt:.0f} s total")


def test_05_quadratic(tmp_path):
    status, doc, dt = _run("quadratic", tmp_path)
    q = doc["runs"][0]["quadratic"]
    _record(5, status == 0, "ratios " + ", ".join(f"{r:.3f}" for r in q["ratios"]))


def test_06_distance_decreasing(tmp_path):
    status, doc, dt = _run("distance_decreasing", tmp_path)
    r = doc["runs"][0]
    _record(6, status == 0, f"sup sigma {r['sigma_start']:.2e} -> {r['sigma_end']:.2e}, "
                            f"largest step change {r['max_increase']:.1e}")


@pytest.mark.slow
def test_07_scatter_convergence(tmp_path):
    status, doc, dt = _run("scatter_convergence", tmp_path)
    r = doc["runs"][0]
    Cs = ", ".join(f"{p['C']:.2e}" for p in r["runs"])
    rates = ", ".join(f"{p['rate_fit']:.2f}" for p in r["runs"])
    stages = [p["cauchy_stage"] for p in r["runs"]]
    _record(7, status == 0 and dt < 600.0,
            f"C = [{Cs}] (sigma ~ eps^{r['sigma_eps_exponent']:.2f}), rates [{rates}] vs "
            f"{r['target_rate']:.0f}, Cauchy stages {stages}, {dt:.0f} s")


@pytest.mark.slow
def test_08_reverse_flow(tmp_path):
    status, doc, dt = _run("reverse_flow", tmp_path)
    r = doc["runs"][0].get("reverse", doc["runs"][0])
    _record(8, status == 0,
            f"slope {r.get('slope', float('nan')):.3f} vs {r.get('target_slope', float('nan')):.0f}, "
            f"energy error {r.get('energy_error', float('nan')):.1e}, "
            f"invariant error {r.get('invariant_error', float('nan')):.1e}")


@pytest.mark.slow
def test_09_round_trip(tmp_path):
    status, doc, dt = _run("round_trip", tmp_path)
    cs = doc["runs"][0].get("round_trip", {}).get("cosines", [])
    _record(9, status == 0 and len(cs) == 5, "cosines " + ", ".join(f"{c:.5f}" for c in cs))


@pytest.mark.slow
def test_10_hecke_single_point(tmp_path):
    status, doc, dt = _run("hecke_single_point", tmp_path)
    r = doc["runs"][0]
    E = r.get("limit_energy", float("nan"))
    ok = status == 0 and abs(E - 4 * math.pi) < 1e-6
    _record(10, ok, f"limit {r.get('measured')}, identification {r.get('identification')}, "
                    f"limit energy {E:.8f} (4 pi = {4 * math.pi:.8f})")


@pytest.mark.slow
def test_11_secant_criterion(tmp_path):
    status, doc, dt = _run("secant_criterion", tmp_path)
    runs = {r["name"]: r for r in doc["runs"]}
    parts = [f"{k}: {r.get('measured')} (round {r.get('rounding_error', float('nan')):.1e})"
             for k, r in runs.items()]
    ok = (status == 0 and runs["on_curve"].get("measured") == [0, 2]
          and runs["generic"].get("measured") == [1, 1])
    _record(11, ok, "; ".join(parts))


def test_12_kernel_rank(tmp_path):
    status, doc, dt = _run("kernel_rank", tmp_path)
    rows = doc["runs"][0]["kernel_rank"]
    parts = [f"({r['degrees']}) rank {r['rank']}/{r['points']} cond {r['gram_condition']:.1f}"
             for r in rows]
    _record(12, status == 0, "; ".join(parts))
