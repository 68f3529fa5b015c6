"""Downward YMH flow generated by the complex gauge group, its linearization at a
critical point, the modified (filtration-preserving) flow, and relative metrics.

The integrator evolves g with dg/dt g^-1 = -i mu(g y_base) by classical RK4 and
reads the pair off as g . y_base, so the trajectory is a composition of complex
gauge transformations of y0.  The step gauge is folded into the base pair
(y_base <- g y_base, g <- I) and into the cumulative gauge g_t whenever its
condition number exceeds rebase_cond; the default 1.0 does this every step.
Folding every step keeps each applied g smooth: the limit of an unstable
orbit is reached only by gauges that steepen without bound near the Hecke
points, and on a grid applying such a g to y0 in one go loses the Leibniz rule
and with it the descent property.

Near a split saddle the grid errors seed directions the exact flow never
excites: in the frame of x the limit is a twisted rotation of a split pair and
the eigen-frame of i mu winds, which gives the discrete Hom operators a few
spurious near-null modes.  The trajectory then passes the saddle instead of
stopping there.  polish_critical completes such an approach by Newton-Krylov
iteration on grad = 0 from the point of closest approach.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegratorDivergence, MetricError, ShapeError
from .higgs_core import (HiggsPair, SplitBundle, TangentPair, comm, energy_of_moment,
                         gauge_act, grad_parts, herm, hermitian_moment, holomorphy_residual,
                         metric_of_gauge, mm, relative_sigma, sigma_of, TANGENT_WEIGHT,
                         grad_ymh, grad_norm, inv)

# generous margin inside the RK4 stability interval (about 2.78 on the negative axis)
RK4_STABILITY = 2.5
MAX_HALVINGS = 8


@dataclass
class FlowOptions:
    """Integrator settings.  dt=None selects 0.01 / (1 + max|spec i mu(y0)|)."""

    dt: float | None = None
    t_max: float = 10.0
    grad_tol: float = 1e-8
    record_every: int = 10
    adaptive: bool = True
    stability_cap: bool = True
    track_sigma: bool = True
    keep_gauges: bool = False
    energy_tol: float = 1e-11
    max_steps: int | None = None
    rebase_cond: float = 1.0
    depart_factor: float | None = None
    depart_floor: float = 1e-2
    depart_window: float = 0.25

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.depart_factor is not None and not self.depart_factor > 1:
            raise ConfigError("depart_factor must exceed 1")


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    spectra: list = field(default_factory=list)
    sup_sigma: list = field(default_factory=list)
    hol_residuals: list = field(default_factory=list)
    gauges: list = field(default_factory=list)
    final_pair: HiggsPair | None = None
    final_gauge: np.ndarray | None = None
    best_pair: HiggsPair | None = None
    best_time: float = 0.0
    best_grad: float = np.inf
    departed: bool = False
    converged: bool = False
    steps: int = 0
    rebases: int = 0
    halvings: int = 0
    dt: float = 0.0

    def as_arrays(self) -> dict:
        return {
            "t": np.asarray(self.times),
            "energy": np.asarray(self.energies),
            "grad_norm": np.asarray(self.grad_norms),
            "spectra": np.asarray(self.spectra),
            "sup_sigma": np.asarray(self.sup_sigma),
            "hol_residual": np.asarray(self.hol_residuals),
        }

    def rows(self):
        """Rows t, energy, grad_norm, spec_1..spec_r, sup_sigma, hol_residual."""
        for i, t in enumerate(self.times):
            yield [t, self.energies[i], self.grad_norms[i], *list(self.spectra[i]),
                   self.sup_sigma[i], self.hol_residuals[i]]


def stability_dt(bundle: SplitBundle) -> float:
    """RK4 step bound from the largest grid wavenumber of the linearized operator.

    The twist term 2 pi i m v of the demodulated derivative shifts the top
    wavenumber by up to 2 pi |m| per direction, which matters at small n.
    """
    g = bundle.grid
    d = np.asarray(bundle.degrees, dtype=float)
    m = float(d.max() - d.min())
    kmax2 = 2.0 * (np.pi * (g.n + 2.0 * m) / g.ell) ** 2
    return RK4_STABILITY / kmax2


def default_dt(y0: HiggsPair) -> float:
    spec = np.linalg.eigvalsh(hermitian_moment(y0))
    return 0.01 / (1.0 + float(np.max(np.abs(spec))))


def _generator_plain(M):
    return -M


def _generator_modified(M):
    # -M + gamma, gamma = M_lower - M_lower^*, leaves an upper-triangular generator
    low = np.tril(np.ones(M.shape[-2:]), -1)
    gl = M * low
    return -M + gl - herm(gl)


class _GaugeIntegrator:
    def __init__(self, y0: HiggsPair, generator):
        self.bundle = y0.bundle
        self.base = y0.copy()
        self.g = self.bundle.identity()
        self.cumulative = self.bundle.identity()
        self.generator = generator
        self.rebases = 0

    def pair_of(self, g):
        return gauge_act(g, self.base, inv(g))

    def rhs(self, g):
        y = self.pair_of(g)
        M = hermitian_moment(y)
        return mm(self.generator(M), g)

    def step(self, dt):
        g = self.g
        k1 = self.rhs(g)
        k2 = self.rhs(g + 0.5 * dt * k1)
        k3 = self.rhs(g + 0.5 * dt * k2)
        k4 = self.rhs(g + dt * k3)
        return g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def maybe_rebase(self, threshold, pair=None):
        if threshold > 1.0 and float(np.max(np.linalg.cond(self.g))) <= threshold:
            return
        self.base = pair if pair is not None else self.pair_of(self.g)
        self.cumulative = mm(self.g, self.cumulative)
        self.g = self.bundle.identity()
        self.rebases += 1

    def total_gauge(self):
        return mm(self.g, self.cumulative)


def _record(trace, t, y, M, g_total, opts):
    _record_values(trace, t, y, M, g_total, opts)
    if trace.grad_norms[-1] < trace.best_grad:
        trace.best_grad = trace.grad_norms[-1]
        trace.best_time = t
        trace.best_pair = y


def _record_values(trace, t, y, M, g_total, opts):
    trace.times.append(float(t))
    trace.energies.append(energy_of_moment(M, y.grid.cell))
    trace.grad_norms.append(_grad_norm_from(y, M))
    s = np.linalg.eigvalsh(M)
    trace.spectra.append(s.reshape(-1, s.shape[-1]).mean(axis=0))
    if opts.track_sigma:
        try:
            trace.sup_sigma.append(sigma_of(mm(herm(g_total), g_total))[1])
        except MetricError:
            # diverging gauge (limit outside the orbit): h_t is numerically indefinite
            trace.sup_sigma.append(float("inf"))
    else:
        trace.sup_sigma.append(float("nan"))
    trace.hol_residuals.append(holomorphy_residual(y))
    if opts.keep_gauges:
        trace.gauges.append(g_total.copy())


def _grad_norm_from(y, M):
    da, dphi = grad_parts(y, M)
    return float(np.sqrt(TANGENT_WEIGHT * y.grid.cell * (np.sum(np.abs(da) ** 2) + np.sum(np.abs(dphi) ** 2))))


def _run(y0: HiggsPair, opts: FlowOptions, generator, callback=None) -> FlowTrace:
    opts = opts or FlowOptions()
    dt0 = opts.dt if opts.dt is not None else default_dt(y0)
    if opts.stability_cap:
        dt0 = min(dt0, stability_dt(y0.bundle))
    integ = _GaugeIntegrator(y0, generator)
    trace = FlowTrace(dt=dt0)
    t = 0.0
    y = y0
    M = hermitian_moment(y)
    E = energy_of_moment(M, y.grid.cell)
    _record(trace, t, y, M, integ.total_gauge(), opts)
    dt = dt0
    good = 0
    step = 0
    while True:
        gn = trace.grad_norms[-1] if step % opts.record_every == 0 else _grad_norm_from(y, M)
        if gn < opts.grad_tol:
            trace.converged = True
            break
        if t >= opts.t_max - 1e-14 or (opts.max_steps is not None and step >= opts.max_steps):
            break
        if (opts.depart_factor is not None and trace.best_grad < opts.depart_floor
                and gn > opts.depart_factor * trace.best_grad
                and t - trace.best_time >= opts.depart_window):
            trace.departed = True
            break
        h = min(dt, opts.t_max - t)
        for attempt in range(MAX_HALVINGS + 1):
            g_new = integ.step(h)
            y_new = integ.pair_of(g_new)
            M_new = hermitian_moment(y_new)
            E_new = energy_of_moment(M_new, y.grid.cell)
            if not np.isfinite(E_new):
                ok = False
            else:
                ok = (not opts.adaptive) or E_new <= E + opts.energy_tol * (1.0 + abs(E))
            if ok:
                break
            if attempt == MAX_HALVINGS:
                raise IntegratorDivergence(
                    f"energy increase persists after {MAX_HALVINGS} step halvings at t={t:.6g}")
            h *= 0.5
            trace.halvings += 1
            good = 0
        dt = min(dt, h) if h < dt else dt
        integ.g = g_new
        t += h
        step += 1
        good += 1
        if dt < dt0 and good >= 20:
            dt = min(dt0, 2.0 * dt)
            good = 0
        y, M, E = y_new, M_new, E_new
        integ.maybe_rebase(opts.rebase_cond, y_new)
        if step % opts.record_every == 0:
            _record(trace, t, y, M, integ.total_gauge(), opts)
        if callback is not None:
            callback(t, y)
    if trace.times[-1] != t:
        _record(trace, t, y, M, integ.total_gauge(), opts)
    trace.final_pair = y
    trace.final_gauge = integ.total_gauge()
    trace.steps = step
    trace.rebases = integ.rebases
    return trace


def _pack(d: TangentPair) -> np.ndarray:
    return np.concatenate([d.da.real.ravel(), d.da.imag.ravel(),
                           d.dphi.real.ravel(), d.dphi.imag.ravel()])


def _unpack(bundle: SplitBundle, v: np.ndarray, shape) -> TangentPair:
    k = int(np.prod(shape))
    da = (v[:k] + 1j * v[k:2 * k]).reshape(shape)
    dphi = (v[2 * k:3 * k] + 1j * v[3 * k:]).reshape(shape)
    return TangentPair(bundle, da, dphi)


@dataclass
class PolishReport:
    grad_history: list
    step_sizes: list
    distance: float
    converged: bool


def polish_critical(y: HiggsPair, tol: float = 1e-7, max_newton: int = 8,
                    krylov_rtol: float = 1e-8, maxiter: int = 3000,
                    fd_step: float = 1e-4) -> tuple[HiggsPair, PolishReport]:
    """Newton-Krylov iteration on grad = 0 started at y.

    The Hessian is applied by central differences of the analytic gradient
    (exact up to fd_step^2 since the gradient is cubic in the pair) and
    inverted by MINRES; it is symmetric in the packed real coordinates and
    singular along the unitary orbit and the flat moduli, where MINRES
    returns the minimum-change step.  distance is the sup distance between y
    and the returned pair.
    """
    from scipy.sparse.linalg import LinearOperator, minres

    b = y.bundle
    shape = y.alpha.shape
    cur = y
    g = grad_ymh(cur)
    gn = grad_norm(cur)
    hist, steps = [gn], []
    for _ in range(max_newton):
        if gn < tol:
            break
        base = cur

        def hv(v, base=base):
            nv = float(np.linalg.norm(v))
            if nv == 0.0:
                return np.zeros_like(v)
            h = fd_step / nv
            d = _unpack(b, v, shape)
            gp = grad_ymh(base + d * h)
            gm = grad_ymh(base + d * (-h))
            return (_pack(gp) - _pack(gm)) / (2.0 * h)

        n = 4 * int(np.prod(shape))
        op = LinearOperator((n, n), matvec=hv, dtype=float)
        rhs = -_pack(g)
        sol, _ = minres(op, rhs, rtol=krylov_rtol, maxiter=maxiter)
        d = _unpack(b, sol, shape)
        lam = 1.0
        for _ in range(6):
            trial = base + d * lam
            tn = grad_norm(trial)
            if tn < gn:
                break
            lam *= 0.5
        else:
            break
        cur, gn = trial, tn
        g = grad_ymh(cur)
        hist.append(gn)
        steps.append(lam * float(np.abs(sol).max()))
    dist = float(max(np.abs(cur.alpha - y.alpha).max(), np.abs(cur.Phi - y.Phi).max()))
    return cur, PolishReport(hist, steps, dist, gn < tol)


def flow(y0: HiggsPair, opts: FlowOptions | None = None, callback=None) -> FlowTrace:
    """Integrate dg/dt g^-1 = -i mu(g y0) with RK4 and return the sampled trace."""
    return _run(y0, opts or FlowOptions(), _generator_plain, callback)


def flow_to_limit(y0: HiggsPair, opts: FlowOptions | None = None, polish: bool = True,
                  callback=None):
    """Flow down and return (limit, trace, polish report or None).

    When the flow passes a saddle (departure rule) or stops before grad_tol,
    the limit is the pair of smallest gradient, completed by polish_critical
    to the same tolerance.
    """
    opts = opts or FlowOptions()
    tr = flow(y0, opts, callback=callback)
    if tr.converged and not tr.departed:
        return tr.final_pair, tr, None
    limit = tr.best_pair if tr.best_pair is not None else tr.final_pair
    rep = None
    if polish:
        limit, rep = polish_critical(limit, tol=opts.grad_tol)
    return limit, tr, rep


def modified_flow(x, y0: HiggsPair, opts: FlowOptions | None = None, callback=None) -> FlowTrace:
    """Flow generated by -i mu + gamma; the gauge stays upper triangular.

    Summands are ordered by increasing degree, so "strictly lower" means the
    entries Hom(E_j, E_k) with lambda_k > lambda_j.  gamma is skew-Hermitian,
    hence h_t = g_t^* g_t is the same as for the plain flow.
    """
    if tuple(x.pair.degrees) != tuple(y0.degrees):
        raise ShapeError("initial pair does not live on the bundle of the critical point")
    return _run(y0, opts or FlowOptions(), _generator_modified, callback)


def block_eigenvalues(bundle: SplitBundle) -> np.ndarray:
    """Eigenvalue of ad(i beta) on entry [k, j] = Hom(E_j, E_k): lambda_k - lambda_j."""
    d = np.asarray(bundle.degrees, dtype=float)
    return d[:, None] - d[None, :]


def linearized_flow(x, dx: TangentPair, t: float) -> TangentPair:
    """e^{i beta t} . dx: entry Hom(E_j, E_k) scaled by exp((lambda_k - lambda_j) t)."""
    lam = block_eigenvalues(dx.bundle)
    s = np.exp(lam * t)
    return TangentPair(dx.bundle, dx.da * s, dx.dphi * s)


def relative_metric(gA, g0, gB) -> np.ndarray:
    """k = gA g0 gB^-1 and h = k^* k."""
    k = mm(mm(gA, g0), inv(gB))
    return mm(herm(k), k)


def track_relative_metric(traceA: FlowTrace, traceB: FlowTrace, g0) -> np.ndarray:
    """sup sigma of the metric relating the two flows at each shared sample.

    traceA starts from g0 . y and traceB from y; both need keep_gauges=True.
    """
    if len(traceA.times) != len(traceB.times) or not np.allclose(traceA.times, traceB.times,
                                                                  rtol=0, atol=1e-12):
        raise ShapeError("traces do not share a time grid")
    if not traceA.gauges or not traceB.gauges:
        raise ShapeError("traces were recorded without gauges (keep_gauges=False)")
    out = []
    for gA, gB in zip(traceA.gauges, traceB.gauges):
        h = relative_metric(gA, g0, gB)
        out.append(sigma_of(h)[1])
    return np.asarray(out)


def is_nonincreasing(series, tol=1e-7) -> bool:
    s = np.asarray(series)
    return bool(np.all(np.diff(s) <= tol))
