"""Scattering construction of reverse-flow solutions into a split critical point.

Stage t: push y0 = x + dx up by the linearized flow, w = e^{i beta t} . y0, flow
down from w until the energy first returns to YMH(y0) (capped at time t), and
record the total gauge f_t with z_t = f_t . y0 and h_t = f_t^* f_t.

The down-flow is the plain gauge integrator of flow_engine (step gauges folded
into the pair every step), so a stage is the same discrete trajectory as
flow(w).  With G the product of the step gauges, f_t = G e^{D t}.  Integrating
G e^{D s} directly as one gauge field is unstable on the grid: its unitary
part is unconstrained by the energy and the discrete twisted derivatives do
not commute exactly at the highest wavenumbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, NeedsDeeperSamples, NotConvergedError
from .flow_engine import (FlowOptions, _GaugeIntegrator, _generator_plain, default_dt, flow,
                          linearized_flow, stability_dt)
from .higgs_core import (HiggsPair, TangentPair, energy_of_moment, gauge_act, herm,
                         hermitian_moment, inv, metric_of_gauge, mm, relative_sigma, sigma_of)
from .slice_lab import (CriticalPoint, HarmonicBasis, negative_component, orthogonality_residual)

ENERGY_BISECT_TOL = 1e-10
# sigma differences below this are at the double-precision floor of the shifted form
SIGMA_FLOOR = 1e-22


@dataclass
class ScatterSchedule:
    t_values: list = field(default_factory=lambda: [float(k) for k in range(1, 13)])
    sigma_cauchy_tol: float = 1e-10
    max_stage: int = 12
    min_stages: int = 6
    dt: float | None = None
    reverse_stride: int = 20

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ConfigError("t_values must be positive and strictly increasing")
        if not self.sigma_cauchy_tol > 0:
            raise ConfigError("sigma_cauchy_tol must be positive")
        if self.max_stage < 1 or self.min_stages < 1:
            raise ConfigError("stage counts must be >= 1")


@dataclass
class StageRecord:
    t: float
    t_prime: float
    stopped_on_energy: bool
    energy_at_stop: float
    sup_sigma: float
    min_distance: float
    sup_distance_w: float


@dataclass
class ScatterResult:
    y0: HiggsPair
    z_inf: HiggsPair
    h_stages: list
    sigma_stages: list
    cauchy_sigma: list
    rate_fit: float
    reverse_samples: list
    reverse_energies: list
    stages: list
    converged: bool
    cauchy_stage: int | None
    dt: float
    eps: float = float("nan")

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "cauchy_stage": self.cauchy_stage,
            "rate_fit": self.rate_fit,
            "sigma_stages": [float(s) for s in self.sigma_stages],
            "cauchy_sigma": [float(s) for s in self.cauchy_sigma],
            "t_prime": [s.t_prime for s in self.stages],
            "stopped_on_energy": [s.stopped_on_energy for s in self.stages],
            "energy_at_stop": [s.energy_at_stop for s in self.stages],
            "min_distance": [s.min_distance for s in self.stages],
        }


def pair_distance(y: HiggsPair, x: HiggsPair) -> float:
    """Discrete C^0 distance: sup over sites and entries of the coefficient differences."""
    return float(max(np.max(np.abs(y.alpha - x.alpha)), np.max(np.abs(y.Phi - x.Phi))))


def pair_distance_c1(y: HiggsPair, x: HiggsPair) -> float:
    """Discrete C^1 distance: adds the sup of the first covariant derivatives."""
    ops = y.bundle.ops
    d = [pair_distance(y, x)]
    for f in (y.alpha - x.alpha, y.Phi - x.Phi):
        d.append(float(np.max(np.abs(ops.du(f)))) / y.grid.ell)
        d.append(float(np.max(np.abs(ops.dv(f)))) / y.grid.ell)
    return max(d)


def scale_pair(y: HiggsPair, tau: float) -> HiggsPair:
    """e^{D tau} . y for constant diagonal D: entry [i, j] times exp((d_i - d_j) tau)."""
    d = np.asarray(y.degrees, dtype=float)
    s = np.exp((d[:, None] - d[None, :]) * tau)
    return HiggsPair(y.bundle, y.alpha * s, y.Phi * s)


def _energy_of(y: HiggsPair) -> float:
    return energy_of_moment(hermitian_moment(y), y.grid.cell)


def run_stage(x: CriticalPoint, y0: HiggsPair, t: float, dt: float, keep: int = 0):
    """Down-flow from e^{D t} y0 with the energy-level stopping rule.

    Returns (G, z, t', stopped_on_energy, samples): G is the accumulated
    down-flow gauge, z = G . e^{D t} y0 the stopped pair, and samples lists
    (s, pair at time s) every `keep` steps when keep > 0.
    """
    w = scale_pair(y0, t)
    E_target = _energy_of(y0)
    integ = _GaugeIntegrator(w, _generator_plain)
    s = 0.0
    y = w
    samples = [(0.0, w)] if keep else []
    steps = 0
    while s < t - 1e-14:
        h = min(dt, t - s)
        g_new = integ.step(h)
        y_new = integ.pair_of(g_new)
        E_new = _energy_of(y_new)
        if E_new <= E_target:
            # bracket [s, s + h]: bisect on the partial step length
            lo, hi = 0.0, h
            g_hi, y_hi, E_hi = g_new, y_new, E_new
            for _ in range(200):
                if abs(E_hi - E_target) < ENERGY_BISECT_TOL or hi - lo < 1e-15:
                    break
                mid = 0.5 * (lo + hi)
                g_m = integ.step(mid)
                y_m = integ.pair_of(g_m)
                E_m = _energy_of(y_m)
                if E_m <= E_target:
                    hi, g_hi, y_hi, E_hi = mid, g_m, y_m, E_m
                else:
                    lo = mid
            tp = s + hi
            if keep:
                samples.append((tp, y_hi))
            return mm(g_hi, integ.cumulative), y_hi, tp, True, samples
        integ.g = g_new
        integ.maybe_rebase(1.0, y_new)
        y = y_new
        s += h
        steps += 1
        if keep and steps % keep == 0:
            samples.append((s, y))
    if keep and samples[-1][0] != s:
        samples.append((s, y))
    return integ.total_gauge(), y, t, False, samples


def _fit_rate(ts, vals, floor=1e-28):
    ts = np.asarray(ts, dtype=float)
    v = np.asarray(vals, dtype=float)
    ok = v > floor
    if ok.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(ts[ok], np.log(v[ok]), 1)
    return float(slope)


def scatter(x: CriticalPoint, dx_neg: TangentPair, sched: ScatterSchedule | None = None,
            check_slice: bool = True) -> ScatterResult:
    sched = sched or ScatterSchedule()
    if check_slice:
        rest = dx_neg - negative_component(x, dx_neg)
        if np.max(np.abs(rest.da)) > 1e-12 or np.max(np.abs(rest.dphi)) > 1e-12:
            raise DomainError("deformation has components outside the negative blocks")
    y0 = x.pair + dx_neg
    dt = sched.dt if sched.dt is not None else min(default_dt(y0), stability_dt(y0.bundle))
    D = x.bundle.D
    h_stages, sig, cauchy, stages = [], [], [], []
    f_prev = None
    cauchy_stage = None
    last = None
    n_stage = min(sched.max_stage, len(sched.t_values))
    for i in range(n_stage):
        t = float(sched.t_values[i])
        final_guess = i == n_stage - 1
        G, z, tp, stopped, _ = run_stage(x, y0, t, dt)
        expD = np.diag(np.exp(np.diag(D).real * t))
        f = mm(G, np.broadcast_to(expD, G.shape))
        h = metric_of_gauge(f)
        s_sup = sigma_of(h)[1]
        h_stages.append(h)
        sig.append(s_sup)
        if f_prev is not None:
            cauchy.append(relative_sigma(h, metric_of_gauge(f_prev))[1])
        stages.append(StageRecord(t, tp, stopped, _energy_of(z), s_sup,
                                  pair_distance(z, x.pair),
                                  pair_distance(scale_pair(y0, t), x.pair)))
        f_prev = f
        last = t
        if cauchy and cauchy[-1] < sched.sigma_cauchy_tol and cauchy_stage is None:
            cauchy_stage = i + 1
        if cauchy_stage is not None and i + 1 >= sched.min_stages:
            break
    # reverse samples from the last stage, re-run with sampling
    t = last
    _, z_inf, tp, stopped, samples = run_stage(x, y0, t, dt, keep=sched.reverse_stride)
    rev, rev_E = [], []
    for tau, zs in samples:
        rev.append((tp - tau, zs))
        rev_E.append(_energy_of(zs))
    order = np.argsort([s for s, _ in rev])
    rev = [rev[k] for k in order]
    rev_E = [rev_E[k] for k in order]
    rate = _fit_rate([st.t for st in stages[1:]], cauchy, SIGMA_FLOOR) if cauchy else float("nan")
    return ScatterResult(y0, z_inf, h_stages, sig, cauchy, rate, rev, rev_E, stages,
                         cauchy_stage is not None, cauchy_stage, dt)


@dataclass
class ReverseReport:
    slope: float
    target_slope: float
    slope_ok: bool
    monotone: bool
    energy_error: float
    energy_ok: bool
    invariant_error: float
    invariant_ok: bool
    distances: list = field(default_factory=list)
    s_values: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.monotone and self.energy_ok and self.invariant_ok


def char_invariants(y: HiggsPair):
    P = y.Phi
    tr = np.trace(P, axis1=-2, axis2=-1)
    det = np.linalg.det(P)
    return tr, det


def extreme_negative_eigenvalue(x: CriticalPoint) -> float:
    d = np.asarray(x.degrees, dtype=float)
    return float(d.min() - d.max())


def reverse_trajectory_check(x: CriticalPoint, res: ScatterResult, slope_rtol: float = 0.3,
                             energy_tol: float = 1e-6, inv_tol: float = 1e-6,
                             floor: float = 1e-12) -> ReverseReport:
    if not res.converged:
        raise NotConvergedError("scatter run did not reach the sigma-Cauchy criterion")
    s_vals = np.array([s for s, _ in res.reverse_samples])
    dist = np.array([pair_distance(z, x.pair) for _, z in res.reverse_samples])
    lam = extreme_negative_eigenvalue(x)
    ok = dist > floor
    # fit the tail, away from the nonlinear region near z_inf
    tail = ok & (s_vals >= 0.25 * s_vals.max())
    slope = _fit_rate(s_vals[tail], dist[tail], floor=0.0) if tail.sum() >= 2 else float("nan")
    slope_ok = bool(np.isfinite(slope) and abs(slope - lam) <= slope_rtol * abs(lam))
    monotone = bool(np.all(np.diff(dist[ok]) <= 1e-12 * max(1.0, dist.max())))
    # forward flow from the deepest sample with the plain integrator reproduces the energies
    S, z_deep = res.reverse_samples[-1]
    tr = flow(z_deep, FlowOptions(dt=res.dt, t_max=S, record_every=1, grad_tol=0.0,
                                  track_sigma=False, stability_cap=False))
    times = np.asarray(tr.times)
    E_fwd = np.interp(S - s_vals, times, np.asarray(tr.energies))
    on_grid = np.min(np.abs(times[None, :] - (S - s_vals)[:, None]), axis=1) < 1e-9
    e_err = float(np.max(np.abs(E_fwd[on_grid] - np.asarray(res.reverse_energies)[on_grid])))
    tr0, det0 = char_invariants(res.y0)
    inv = 0.0
    for _, z in res.reverse_samples + [(0.0, res.z_inf)]:
        t1, d1 = char_invariants(z)
        inv = max(inv, float(np.max(np.abs(t1 - tr0))), float(np.max(np.abs(d1 - det0))))
    return ReverseReport(slope, lam, slope_ok, monotone, e_err, e_err <= energy_tol, inv,
                         inv <= inv_tol, list(dist), list(s_vals))


def recover_slice(x: CriticalPoint, res: ScatterResult, H: HarmonicBasis,
                  depth_tol: float = 1e-6, depth_rtol: float = 1e-3) -> tuple[TangentPair, np.ndarray]:
    """Inverse construction from the deepest reverse sample; returns the slice element and its H^1 coordinates.

    The deepest sample must be within depth_tol (absolute) or depth_rtol
    relative to |y0 - x|; the linearized inverse is first-order in that
    distance."""
    if not res.reverse_samples:
        raise NeedsDeeperSamples("no reverse samples")
    scale = max(pair_distance(res.y0, x.pair), 1e-300)
    S, z = res.reverse_samples[-1]
    if pair_distance(z, x.pair) > depth_tol * max(1.0, scale) and pair_distance(z, x.pair) > depth_rtol * scale:
        raise NeedsDeeperSamples("deepest reverse sample is not close enough to the critical point")
    d = z - x.pair
    d = linearized_flow(x, d, -S)
    d = negative_component(x, d)
    coords = H.coordinates(d)
    return H.element(coords), coords


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
