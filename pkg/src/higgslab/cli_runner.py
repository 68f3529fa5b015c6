"""Config-driven experiment runner.

    higgslab <command> --config <path> [--out <dir>] [--seed <int>]

Commands: flow, scatter, reverse-check, hecke-flowline, spectra, calibrate.
Exit status is 0 when every verdict passes, 2 on a scientific failure and 1
on a configuration error.  Every science parameter lives in the config file
(YAML or JSON); HIGGSLAB_THREADS only caps the BLAS/OpenMP thread count.

Artifacts in the output directory:
    summary.json      machine-readable verdicts, byte-reproducible per config
    *.csv             traces and plot tables, one table per figure
    figures/*.png     renderings of the plot tables
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

COMMANDS = ("flow", "scatter", "reverse-check", "hecke-flowline", "spectra", "calibrate")
EXIT_PASS, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

TOP_KEYS = {"command", "seed", "grid", "model", "experiment", "runs", "figures", "name"}
GRID_KEYS = {"n", "tau"}
MODEL_KEYS = {"degrees", "higgs_consts", "holonomies"}
CLASS_KEYS = {"class_rule", "points", "z", "eps", "width_cells"}
FLOW_KEYS = {"t_max", "grad_tol", "dt", "record_every", "depart_factor", "polish"}
SCHED_KEYS = {"t_values", "sigma_cauchy_tol", "max_stage", "min_stages", "dt", "reverse_stride"}
EXPERIMENT_KEYS = {
    "calibrate": {"m_min", "m_max", "degree_tol", "kernel_rtol"},
    "spectra": {"checks", "critical", "energy_rtol", "grad_tol", "directions", "fd_step",
                "fd_rtol", "unitary_rtol", "amplitude", "eps0", "halvings", "ratio_lo",
                "ratio_hi", "points", "width_cells", "kernel_cases", "cond_max"},
    "flow": CLASS_KEYS | FLOW_KEYS | {"amplitude", "expect_limit", "energy_max", "paired",
                                      "gauge_amplitude", "sigma_tol"},
    "scatter": (CLASS_KEYS | SCHED_KEYS | {"C_rtol", "rate_rtol", "max_cauchy_stage"}) - {"class_rule"},
    "reverse-check": (CLASS_KEYS | SCHED_KEYS | {"checks", "slope_rtol", "energy_tol", "inv_tol",
                                                 "directions", "cos_min"}) - {"class_rule"},
    "hecke-flowline": CLASS_KEYS | {"t_max", "grad_tol", "depart_factor", "polish", "use_scatter",
                                    "scatter_stages", "expect"},
}


class ConfigProblem(Exception):
    """Schema violation with a dotted field path and, when known, a line number."""

    def __init__(self, msg, path=None, line=None):
        self.msg, self.path, self.line = msg, path, line
        where = ""
        if path:
            where = f"field '{path}'"
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(f"{where}: {msg}" if where else msg)


# ---------------------------------------------------------------- config loading

def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line of the key, from the YAML node tree."""
    import yaml

    out = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                key = f"{prefix}[{i}]"
                out[key] = v.start_mark.line + 1
                walk(v, key)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


def load_config(path) -> tuple[dict, dict]:
    """Parse a YAML or JSON config; returns (config, line map)."""
    import yaml

    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigProblem(f"cannot read config: {exc}")
    try:
        if p.suffix.lower() == ".json":
            cfg = json.loads(text)
        else:
            cfg = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigProblem(exc.msg, line=exc.lineno)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigProblem(str(getattr(exc, "problem", exc)),
                            line=None if mark is None else mark.line + 1)
    if not isinstance(cfg, dict):
        raise ConfigProblem("config must be a mapping")
    return cfg, _line_map(text)


def _check_keys(d, allowed, prefix, lines):
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigProblem("expected a mapping", prefix, lines.get(prefix))
    for k in d:
        if k not in allowed:
            path = f"{prefix}.{k}" if prefix else k
            raise ConfigProblem(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                                path, lines.get(path))
    return d


def _check_tolerances(d, prefix, lines):
    """Every key ending in 'tol' must be a positive number."""
    if isinstance(d, dict):
        for k, v in d.items():
            path = f"{prefix}.{k}" if prefix else k
            if k.endswith("tol"):
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                    raise ConfigProblem("tolerances must be positive numbers", path, lines.get(path))
            _check_tolerances(v, path, lines)
    elif isinstance(d, list):
        for i, v in enumerate(d):
            _check_tolerances(v, f"{prefix}[{i}]", lines)


def validate(cfg: dict, lines: dict | None = None) -> dict:
    """Schema check; returns the list of fully merged runs."""
    lines = lines or {}
    _check_keys(cfg, TOP_KEYS, "", lines)
    cmd = cfg.get("command")
    if cmd not in COMMANDS:
        raise ConfigProblem(f"command must be one of {', '.join(COMMANDS)}", "command",
                            lines.get("command"))
    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigProblem("seed must be a non-negative integer", "seed", lines.get("seed"))
    _check_keys(cfg.get("grid"), GRID_KEYS, "grid", lines)
    _check_keys(cfg.get("model"), MODEL_KEYS, "model", lines)
    _check_keys(cfg.get("experiment"), EXPERIMENT_KEYS.get(cmd, set()), "experiment", lines)
    runs = cfg.get("runs")
    if runs is not None:
        if not isinstance(runs, list) or not runs:
            raise ConfigProblem("runs must be a non-empty list", "runs", lines.get("runs"))
        for i, r in enumerate(runs):
            pre = f"runs[{i}]"
            _check_keys(r, {"name", "grid", "model", "experiment"}, pre, lines)
            _check_keys(r.get("grid"), GRID_KEYS, pre + ".grid", lines)
            _check_keys(r.get("model"), MODEL_KEYS, pre + ".model", lines)
            _check_keys(r.get("experiment"), EXPERIMENT_KEYS.get(cmd, set()), pre + ".experiment", lines)
    _check_tolerances(cfg, "", lines)
    return cfg


def merged_runs(cfg: dict) -> list:
    base = {"grid": dict(cfg.get("grid") or {}), "model": dict(cfg.get("model") or {}),
            "experiment": dict(cfg.get("experiment") or {})}
    runs = cfg.get("runs") or [{}]
    out = []
    for i, r in enumerate(runs):
        m = {k: dict(base[k], **(r.get(k) or {})) for k in base}
        m["name"] = str(r.get("name", f"run{i}" if len(runs) > 1 else "run"))
        m["index"] = i
        out.append(m)
    return out


# ---------------------------------------------------------------- shared builders

def _tau(v):
    if v is None:
        return 1j
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def _critical(run, degrees=None):
    from .slice_lab import build_critical

    g, m = run["grid"], run["model"]
    degs = degrees if degrees is not None else m.get("degrees")
    if degs is None:
        raise ConfigProblem("model.degrees is required", "model.degrees")
    hc = m.get("higgs_consts") if degrees is None else None
    hol = m.get("holonomies") if degrees is None else None
    if hol is not None:
        hol = [tuple(float(a) for a in h) for h in hol]
    if hc is not None:
        hc = [_tau(c) if isinstance(c, (list, str)) else complex(c) for c in hc]
    return build_critical(list(degs), hc, hol, n=int(g.get("n", 32)), tau=_tau(g.get("tau")))


def _points(e):
    return [tuple(float(a) for a in p) for p in e.get("points", [])]


def _slice_class(x, H, e, rng):
    """Unit H^1 coordinates: kernel_map image of the points, or a seeded random class."""
    import numpy as np
    from .hecke_lab import kernel_map

    rule = e.get("class_rule", "secant")
    if rule == "secant":
        pts = _points(e)
        if not pts:
            raise ConfigProblem("the secant rule needs points", "experiment.points")
        z = np.ones(len(pts)) if e.get("z") is None else np.asarray(e["z"], dtype=complex)
        c = kernel_map(x, pts, z, H, width_cells=float(e.get("width_cells", 4)))
    elif rule == "generic":
        c = rng.normal(size=H.dim) + 1j * rng.normal(size=H.dim)
    else:
        raise ConfigProblem(f"unknown class rule {rule!r}", "experiment.class_rule")
    return c / np.linalg.norm(c)


def _flow_options(e, **extra):
    from .flow_engine import FlowOptions

    kw = {k: e[k] for k in ("t_max", "grad_tol", "dt", "record_every", "depart_factor") if k in e}
    kw.update(extra)
    return FlowOptions(**kw)


def _num(v):
    v = float(v)
    return v if v == v and abs(v) != float("inf") else repr(v)


def _jsonable(o):
    import numpy as np

    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return _num(o)
    if isinstance(o, complex):
        return [_num(o.real), _num(o.imag)]
    if o is None or isinstance(o, str):
        return o
    return str(o)


class Artifacts:
    """Writes tables, figures and the summary into one output directory."""

    def __init__(self, out: Path, figures: bool = True):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.figures = figures
        self.tables = []

    def table(self, name, header, rows, plot=None):
        path = self.out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
        self.tables.append(path.name)
        if plot is not None and self.figures:
            from .report import render

            render(self.out / "figures" / f"{name}.png", header, rows, **plot)
        return path

    def trace(self, name, tr, title=""):
        r = len(tr.spectra[0]) if tr.spectra else 0
        header = ["t", "energy", "grad_norm", *[f"spec_{i + 1}" for i in range(r)],
                  "sup_sigma", "hol_residual"]
        return self.table(name, header, [[float(v) for v in row] for row in tr.rows()],
                          plot={"x": "t", "y": ["energy", "grad_norm"], "logy": True,
                                "title": title})

    def summary(self, doc):
        (self.out / "summary.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- pipelines

def run_calibrate(run, art, rng):
    from .torus_geometry import BackgroundConnection, dbar_kernel_dim, integrated_degree, make_grid

    e, g = run["experiment"], run["grid"]
    grid = make_grid(int(g.get("n", 32)), _tau(g.get("tau")))
    tol = float(e.get("degree_tol", 1e-8))
    rtol = float(e.get("kernel_rtol", 1e-6))
    rows, ok = [], True
    for m in range(int(e.get("m_min", -3)), int(e.get("m_max", 3)) + 1):
        bg = BackgroundConnection(m)
        deg = integrated_degree(grid, bg)
        k = dbar_kernel_dim(grid, bg, rtol)
        expect = max(m, 0) if m != 0 else 1
        good = abs(deg - m) < tol and k == expect
        ok &= good
        rows.append([m, deg, abs(deg - m), k, expect, int(good)])
    art.table(f"{run['name']}_calibration",
              ["m", "integrated_degree", "degree_error", "kernel_dim", "expected_dim", "ok"], rows,
              plot={"x": "m", "y": ["kernel_dim", "expected_dim"], "title": "dim ker dbar"})
    hdr = ["m", "integrated_degree", "degree_error", "kernel_dim", "expected_dim", "ok"]
    return {"passed": bool(ok), "rows": [dict(zip(hdr, r)) for r in rows]}


def run_spectra(run, art, rng):
    import numpy as np
    from .hecke_lab import gram_condition, kernel_images, kernel_map
    from .higgs_core import (HiggsPair, fd_gradient_errors, grad_norm, grad_ymh, grad_ymh_unitary,
                             random_pair, spectrum_sites, ymh_energy)
    from .slice_lab import default_negative_block, harmonic_h1, quadratic_ratios

    e = run["experiment"]
    checks = e.get("checks", ["critical"])
    res, ok = {}, True
    if "critical" in checks:
        erel = float(e.get("energy_rtol", 1e-9))
        gtol = float(e.get("grad_tol", 1e-8))
        cases = e.get("critical") or [run["model"].get("degrees")]
        rows = []
        for degs in cases:
            x = _critical(run, list(degs))
            spec = np.sort(spectrum_sites(x.pair), axis=-1)
            spec_err = float(np.max(np.abs(spec - np.sort(np.asarray(degs, dtype=float)))))
            E = ymh_energy(x.pair)
            E0 = 2 * np.pi * float(np.sum(np.asarray(degs, dtype=float) ** 2))
            rel = abs(E - E0) / max(E0, 1.0)
            gn = grad_norm(x.pair)
            good = gn < gtol and spec_err == 0.0 and rel < erel
            ok &= good
            rows.append([" ".join(str(int(d)) for d in degs), gn, spec_err, E, E0, rel, int(good)])
        hdr = ["degrees", "grad_norm", "spectrum_error", "energy", "expected_energy",
               "energy_rel_error", "ok"]
        art.table(f"{run['name']}_critical", hdr, rows)
        res["critical"] = [dict(zip(hdr, r)) for r in rows]
    if "gradient" in checks:
        x = _critical(run)
        amp = float(e.get("amplitude", 0.3))
        y = random_pair(x.bundle, rng, amp)
        y = HiggsPair(x.bundle, y.alpha + x.pair.alpha, y.Phi + x.pair.Phi)
        errs = fd_gradient_errors(y, rng, int(e.get("directions", 10)), float(e.get("fd_step", 1e-5)))
        a, b = grad_ymh(y), grad_ymh_unitary(y)
        scale = max(np.abs(a.da).max(), np.abs(a.dphi).max())
        uni = float(max(np.abs(a.da - b.da).max(), np.abs(a.dphi - b.dphi).max()) / scale)
        good_fd = max(errs) <= float(e.get("fd_rtol", 1e-6))
        good_u = uni <= float(e.get("unitary_rtol", 1e-8))
        ok &= good_fd and good_u
        art.table(f"{run['name']}_gradient", ["direction", "fd_error"],
                  [[i, v] for i, v in enumerate(errs)],
                  plot={"x": "direction", "y": ["fd_error"], "logy": True, "title": "FD check"})
        res["gradient"] = {"fd_errors": errs, "fd_ok": good_fd, "unitary_rel_error": uni,
                           "unitary_ok": good_u}
    if "quadratic" in checks:
        x = _critical(run)
        H = harmonic_h1(x, default_negative_block(x))
        pts = _points(e) or [(0.25, 0.75)]
        c = kernel_map(x, pts, np.ones(len(pts)), H, width_cells=float(e.get("width_cells", 4)))
        dx = H.element(c / np.linalg.norm(c))
        eps, dev, ratios = quadratic_ratios(x, dx, float(e.get("eps0", 0.1)), int(e.get("halvings", 2)))
        lo, hi = float(e.get("ratio_lo", 3.4)), float(e.get("ratio_hi", 4.6))
        good = all(lo <= r <= hi for r in ratios)
        ok &= good
        art.table(f"{run['name']}_quadratic", ["eps", "sup_deviation"], list(zip(eps, dev)),
                  plot={"x": "eps", "y": ["sup_deviation"], "logy": True, "logx": True,
                        "title": "sup |mu - beta|"})
        res["quadratic"] = {"eps": eps, "deviation": dev, "ratios": ratios, "ok": good}
    if "kernel_rank" in checks:
        cmax = float(e.get("cond_max", 1e6))
        rows = []
        for case in e.get("kernel_cases", []):
            x = _critical(run, list(case["degrees"]))
            H = harmonic_h1(x, default_negative_block(x))
            pts = [tuple(float(a) for a in p) for p in case["points"]]
            K = kernel_images(x, pts, H, width_cells=float(e.get("width_cells", 4)))
            rank = int(np.linalg.matrix_rank(K, tol=1e-8 * np.linalg.norm(K, 2)))
            cond = gram_condition(K)
            good = rank == len(pts) and cond < cmax
            ok &= good
            rows.append([" ".join(str(int(d)) for d in case["degrees"]), H.dim, len(pts), rank,
                         cond, int(good)])
        hdr = ["degrees", "h1_dim", "points", "rank", "gram_condition", "ok"]
        art.table(f"{run['name']}_kernel_rank", hdr, rows)
        res["kernel_rank"] = [dict(zip(hdr, r)) for r in rows]
    res["passed"] = bool(ok)
    return res


def run_flow(run, art, rng):
    import numpy as np
    from .flow_engine import flow, flow_to_limit, is_nonincreasing, track_relative_metric
    from .higgs_core import HiggsPair, gauge_act, random_pair, smooth_random_end
    from .slice_lab import classify_limit, default_negative_block, harmonic_h1

    e = run["experiment"]
    x = _critical(run)
    if e.get("class_rule", "secant") == "random":
        r = random_pair(x.bundle, rng, float(e.get("amplitude", 0.3)))
        y0 = HiggsPair(x.bundle, x.pair.alpha + r.alpha, x.pair.Phi + r.Phi)
    else:
        H = harmonic_h1(x, default_negative_block(x))
        y0 = x.pair + H.element(_slice_class(x, H, e, rng)) * float(e.get("eps", 1e-2))
    res, ok = {}, True
    if e.get("paired", False):
        # distance-decreasing: flows from y0 and g0 . y0 on a shared fixed step
        g0 = x.bundle.identity() + smooth_random_end(x.bundle, rng, amplitude=float(e.get("gauge_amplitude", 0.1)))
        opts = _flow_options(e, adaptive=False, keep_gauges=True, track_sigma=False, grad_tol=0.0,
                             record_every=int(e.get("record_every", 1)))
        tb = flow(y0, opts)
        ta = flow(gauge_act(g0, y0), opts)
        sig = track_relative_metric(ta, tb, g0)
        tol = float(e.get("sigma_tol", 1e-7))
        good = is_nonincreasing(sig, tol)
        ok &= good
        art.table(f"{run['name']}_relative_sigma", ["t", "sup_sigma"], list(zip(tb.times, sig)),
                  plot={"x": "t", "y": ["sup_sigma"], "title": "sup sigma(h_t) between paired flows"})
        art.trace(f"{run['name']}_trace", tb, "flow from y")
        res.update({"max_increase": float(np.max(np.diff(sig))) if sig.size > 1 else 0.0,
                    "sigma_start": float(sig[0]), "sigma_end": float(sig[-1]), "nonincreasing": good})
    else:
        opts = _flow_options(e)
        limit, tr, rep = flow_to_limit(y0, opts, bool(e.get("polish", True)))
        art.trace(f"{run['name']}_trace", tr, f"flow from degrees {tuple(x.degrees)}")
        from .higgs_core import grad_norm, ymh_energy
        gn = grad_norm(limit)
        res["grad_norm"] = gn
        res["energy"] = ymh_energy(limit)
        res["polished"] = rep is not None
        if rep is not None:
            res["polish_shift"] = rep.distance
            res["saddle_time"] = tr.best_time
        good = gn < opts.grad_tol
        try:
            t = classify_limit(limit, grad_tol=max(opts.grad_tol, 1e-6))
            res["limit"] = list(t.degrees)
            res["rounding_error"] = t.rounding_error
            if "expect_limit" in e:
                good &= tuple(sorted(e["expect_limit"])) == t.degrees
            good &= t.rounding_error < 0.05
        except Exception as exc:
            res["classification_error"] = str(exc)
            good = False
        if "energy_max" in e:
            good &= res["energy"] < float(e["energy_max"])
        ok &= bool(good)
    res["passed"] = bool(ok)
    return res


def _scatter_schedule(e):
    from .scattering import ScatterSchedule

    kw = {k: e[k] for k in ("t_values", "sigma_cauchy_tol", "max_stage", "min_stages", "dt",
                            "reverse_stride") if k in e}
    if "t_values" in kw:
        kw["t_values"] = [float(t) for t in kw["t_values"]]
    return ScatterSchedule(**kw)


def _stage_rows(res):
    rows = []
    for i, st in enumerate(res.stages):
        c = res.cauchy_sigma[i - 1] if i > 0 else float("nan")
        rows.append([i + 1, st.t, st.t_prime, int(st.stopped_on_energy), st.energy_at_stop,
                     st.sup_sigma, float(c), st.min_distance])
    return rows


STAGE_HEADER = ["stage", "t", "t_prime", "stopped_on_energy", "energy", "sup_sigma",
                "cauchy_sigma", "distance_to_x"]


def run_scatter(run, art, rng):
    import numpy as np
    from .scattering import scatter
    from .slice_lab import default_negative_block, harmonic_h1

    e = run["experiment"]
    x = _critical(run)
    H = harmonic_h1(x, default_negative_block(x))
    c = _slice_class(x, H, dict(e, class_rule="secant"), rng)
    sched = _scatter_schedule(e)
    eps_list = e.get("eps", [1e-2])
    eps_list = [float(v) for v in (eps_list if isinstance(eps_list, list) else [eps_list])]
    gap = float(max(x.degrees) - min(x.degrees))
    target = -2.0 * gap
    per, Cs, ok = [], [], True
    max_stage = int(e.get("max_cauchy_stage", 12))
    rate_rtol = float(e.get("rate_rtol", 0.2))
    for k, eps in enumerate(eps_list):
        res = scatter(x, H.element(c) * eps, sched)
        art.table(f"{run['name']}_stages_eps{k}", STAGE_HEADER, _stage_rows(res),
                  plot={"x": "t", "y": ["sup_sigma", "cauchy_sigma"], "logy": True,
                        "title": f"scattering stages, eps = {eps:g}"})
        C = res.sigma_stages[-1] / eps ** 2
        Cs.append(C)
        rate_ok = bool(np.isfinite(res.rate_fit) and abs(res.rate_fit - target) <= rate_rtol * abs(target))
        conv_ok = bool(res.converged and res.cauchy_stage is not None and res.cauchy_stage <= max_stage)
        ok &= rate_ok and conv_ok
        per.append({"eps": eps, "C": C, "rate_fit": res.rate_fit, "rate_ok": rate_ok,
                    "converged": res.converged, "cauchy_stage": res.cauchy_stage,
                    "sigma_stages": res.sigma_stages, "cauchy_sigma": res.cauchy_sigma})
    Cs = np.asarray(Cs)
    C_mean = float(np.mean(Cs))
    C_ok = bool(np.all(np.abs(Cs - C_mean) <= float(e.get("C_rtol", 0.25)) * C_mean))
    ok &= C_ok
    art.table(f"{run['name']}_sigma_vs_eps", ["eps", "sup_sigma", "C"],
              [[p["eps"], p["sigma_stages"][-1], p["C"]] for p in per],
              plot={"x": "eps", "y": ["sup_sigma"], "logx": True, "logy": True,
                    "title": "sup sigma(h) against eps"})
    sig = np.asarray([p["sigma_stages"][-1] for p in per])
    expo = float(np.polyfit(np.log(eps_list), np.log(sig), 1)[0]) if len(per) > 1 else float("nan")
    return {"passed": bool(ok), "target_rate": target, "C_mean": C_mean, "C_ok": C_ok,
            "sigma_eps_exponent": expo, "runs": per}


def run_reverse(run, art, rng):
    import numpy as np
    from .scattering import cosine, recover_slice, reverse_trajectory_check, scatter
    from .slice_lab import default_negative_block, harmonic_h1

    e = run["experiment"]
    x = _critical(run)
    H = harmonic_h1(x, default_negative_block(x))
    sched = _scatter_schedule(e)
    eps = float(e.get("eps", 1e-2))
    checks = e.get("checks", ["reverse"])
    out, ok = {}, True
    if "reverse" in checks:
        c = _slice_class(x, H, dict(e, class_rule="secant"), rng)
        res = scatter(x, H.element(c) * eps, sched)
        rep = reverse_trajectory_check(x, res, float(e.get("slope_rtol", 0.3)),
                                       float(e.get("energy_tol", 1e-6)), float(e.get("inv_tol", 1e-6)))
        art.table(f"{run['name']}_reverse", ["s", "distance_to_x", "energy"],
                  [[s, d, E] for s, d, E in zip(rep.s_values, rep.distances, res.reverse_energies)],
                  plot={"x": "s", "y": ["distance_to_x"], "logy": True,
                        "title": "reverse samples approaching x"})
        ok &= rep.passed
        out["reverse"] = {"slope": rep.slope, "target_slope": rep.target_slope,
                          "slope_ok": rep.slope_ok, "monotone": rep.monotone,
                          "energy_error": rep.energy_error, "energy_ok": rep.energy_ok,
                          "invariant_error": rep.invariant_error, "invariant_ok": rep.invariant_ok,
                          "passed": rep.passed}
    if "round_trip" in checks:
        cmin = float(e.get("cos_min", 0.99))
        rows = []
        for k in range(int(e.get("directions", 5))):
            c = rng.normal(size=H.dim) + 1j * rng.normal(size=H.dim)
            c = c / np.linalg.norm(c)
            res = scatter(x, H.element(c) * eps, sched)
            _, coords = recover_slice(x, res, H)
            cs = cosine(coords, c)
            rows.append([k, cs, int(cs > cmin)])
            ok &= cs > cmin
        art.table(f"{run['name']}_round_trip", ["direction", "cosine", "ok"], rows,
                  plot={"x": "direction", "y": ["cosine"], "title": "recover_slice cosine"})
        out["round_trip"] = {"cosines": [r[1] for r in rows], "cos_min": cmin}
    out["passed"] = bool(ok)
    return out


def run_hecke(run, art, rng):
    from .hecke_lab import ExperimentConfig, flowline_experiment

    e, g, m = run["experiment"], run["grid"], run["model"]
    kw = {"degrees": tuple(m.get("degrees", ())), "n": int(g.get("n", 32)), "tau": _tau(g.get("tau")),
          "seed": int(run["seed"])}
    if m.get("higgs_consts") is not None:
        kw["higgs_consts"] = tuple(complex(c) for c in m["higgs_consts"])
    if m.get("holonomies") is not None:
        kw["holonomies"] = tuple(tuple(float(a) for a in h) for h in m["holonomies"])
    for k in ("class_rule", "eps", "width_cells", "t_max", "grad_tol", "depart_factor", "polish",
              "use_scatter"):
        if k in e:
            kw[k] = e[k]
    if "points" in e:
        kw["points"] = tuple(_points(e))
    if e.get("z") is not None:
        kw["z"] = tuple(complex(v) for v in e["z"])
    if "scatter_stages" in e:
        kw["scatter_stages"] = tuple(float(t) for t in e["scatter_stages"])
    v = flowline_experiment(ExperimentConfig(**kw))
    if "flow" in v.traces:
        art.trace(f"{run['name']}_trace", v.traces["flow"], f"flow line from degrees {kw['degrees']}")
    s = v.summary()
    expect = e.get("expect", "pass")
    s["passed"] = v.passed if expect == "pass" else not v.passed
    if "flow" in v.traces:
        s["final_energy"] = v.traces["flow"].energies[-1]
    if "limit" in v.traces:
        from .higgs_core import ymh_energy
        s["limit_energy"] = ymh_energy(v.traces["limit"])
    return s


PIPELINES = {"calibrate": run_calibrate, "spectra": run_spectra, "flow": run_flow,
             "scatter": run_scatter, "reverse-check": run_reverse, "hecke-flowline": run_hecke}


def run(cfg: dict, out_dir, seed: int | None = None, lines: dict | None = None) -> tuple[int, dict]:
    """Validate, execute and write artifacts; returns (exit status, summary)."""
    import numpy as np
    from .errors import ConfigError, HiggsLabError

    validate(cfg, lines)
    if seed is not None:
        cfg = dict(cfg, seed=int(seed))
    art = Artifacts(Path(out_dir), bool(cfg.get("figures", True)))
    doc = {"command": cfg["command"], "seed": int(cfg.get("seed", 0)), "runs": []}
    ok = True
    for r in merged_runs(cfg):
        r["seed"] = int(cfg.get("seed", 0))
        rng = np.random.default_rng(r["seed"])
        try:
            res = PIPELINES[cfg["command"]](r, art, rng)
        except ConfigError as exc:
            raise ConfigProblem(str(exc), f"runs[{r['index']}]" if cfg.get("runs") else "experiment")
        except KeyError as exc:
            raise ConfigProblem(f"missing key {exc}", f"runs[{r['index']}]" if cfg.get("runs") else "experiment")
        except HiggsLabError as exc:  # a scientific failure inside the pipeline
            res = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        res["name"] = r["name"]
        doc["runs"].append(res)
        ok &= bool(res["passed"])
    doc["passed"] = bool(ok)
    doc["tables"] = sorted(art.tables)
    art.summary(doc)
    return (EXIT_PASS if ok else EXIT_FAIL), doc


def main(argv=None) -> int:
    threads = os.environ.get("HIGGSLAB_THREADS")
    if threads:
        for v in THREAD_VARS:
            os.environ[v] = threads
    ap = argparse.ArgumentParser(prog="higgslab", description="Higgs bundle flow lab runner")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    try:
        cfg, lines = load_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise ConfigProblem(f"config is for '{cfg['command']}', not '{args.command}'", "command",
                                lines.get("command"))
        cfg.setdefault("command", args.command)
        out = args.out or os.path.join("runs", Path(args.config).stem)
        status, doc = run(cfg, out, args.seed, lines)
    except ConfigProblem as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in doc["runs"]:
        print(f"{r['name']}: {'PASS' if r['passed'] else 'FAIL'}")
    print(f"{args.command}: {'PASS' if doc['passed'] else 'FAIL'} -> {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
