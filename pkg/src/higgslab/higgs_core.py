"""Higgs pairs on a split smooth bundle E = L_1 + ... + L_r over the torus.

A pair is stored through coefficient fields

    dbar_A = dbar_0 + alpha dzbar,      phi = Phi dz,

with alpha, Phi arrays of shape (n, n, r, r).  Matrix entry [i, j] is a section
of Hom(L_j, L_i), degree d_i - d_j.  Block (j, k) in the text means Hom(E_j, E_k),
i.e. entry [k, j].

The Chern connection is taken in the fixed unitary frame, A = A_0 + alpha dzbar
- alpha^* dz.  With vol = 2*pi the Hermitian moment map is

    M = i*mu = i*(F_A + [phi, phi^*]) = D + 2 (X + X^*) + 2[alpha, alpha^*] + 2[Phi, Phi^*],

where D = diag(d_j) and X = d/dz alpha.  Defining M through X^* (rather than
differentiating alpha^* separately) makes M exactly Hermitian on the grid and
the gradient below the exact derivative of the discrete energy.

Tangent vectors use  <d1, d2> = 8 Re int tr(da1 da2^* + dphi1 dphi2^*) dvol,
twice the L2 metric of (A, psi).  In this metric the descent direction is

    -grad = (d_A-bar M, -[M, Phi]) = rho_y(-M),

the infinitesimal complex gauge action of -i*mu, so dE/dt = -|grad|^2 along
dg/dt g^-1 = -i mu(g.y).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import GaugeError, MetricError, ShapeError
from .torus_geometry import TorusGrid, TwistedField, resolved_basis, twist_ops

TANGENT_WEIGHT = 8.0


def herm(x):
    return np.swapaxes(x, -1, -2).conj()


def mm(a, b):
    """Pointwise product of small matrix fields; entrywise loops beat batched @ for r <= 4."""
    r = a.shape[-1]
    c = b.shape[-1]
    out = np.empty(np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], c),
                   dtype=np.result_type(a, b))
    for i in range(a.shape[-2]):
        for j in range(c):
            acc = a[..., i, 0] * b[..., 0, j]
            for k in range(1, r):
                acc = acc + a[..., i, k] * b[..., k, j]
            out[..., i, j] = acc
    return out


def inv(g):
    """Pointwise inverse; closed form for 2x2."""
    if g.shape[-1] == 2:
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1]
        out[..., 1, 1] = g[..., 0, 0]
        out[..., 0, 1] = -g[..., 0, 1]
        out[..., 1, 0] = -g[..., 1, 0]
        return out / det[..., None, None]
    return np.linalg.inv(g)


def comm(a, b):
    return mm(a, b) - mm(b, a)


@dataclass(frozen=True)
class SplitBundle:
    """Smooth split bundle with line-bundle degrees and flat holonomies."""

    grid: TorusGrid
    degrees: tuple
    holonomies: tuple

    @staticmethod
    def make(grid, degrees, holonomies=None):
        degrees = tuple(int(d) for d in degrees)
        if holonomies is None:
            holonomies = [(0.0, 0.0)] * len(degrees)
        hol = tuple((float(a) % 1.0, float(b) % 1.0) for a, b in holonomies)
        if len(hol) != len(degrees):
            raise ShapeError("one holonomy pair per summand required")
        return _bundle_cached(grid, degrees, hol)

    @property
    def rank(self) -> int:
        return len(self.degrees)

    def __post_init__(self):
        d = np.array(self.degrees)
        h = np.array(self.holonomies, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "_twist", d[:, None] - d[None, :])
        object.__setattr__(self, "_hol", h[:, None, :] - h[None, :, :])
        object.__setattr__(self, "_D", np.diag(d.astype(complex)))

    @property
    def twist(self) -> np.ndarray:
        return self._twist

    @property
    def hol(self) -> np.ndarray:
        return self._hol

    @property
    def D(self) -> np.ndarray:
        return self._D

    @property
    def ops(self):
        return twist_ops(self.grid, self._twist, self._hol)

    def field(self, values, form_type="0") -> TwistedField:
        return TwistedField(self.grid, values, self._twist, self._hol, form_type)

    def zeros(self):
        n = self.grid.n
        return np.zeros((n, n, self.rank, self.rank), dtype=complex)

    def identity(self):
        g = self.zeros()
        g[...] = np.eye(self.rank)
        return g


@lru_cache(maxsize=128)
def _bundle_cached(grid, degrees, hol):
    return SplitBundle(grid, degrees, hol)


@dataclass
class HiggsPair:
    """(dbar_0 + alpha dzbar, Phi dz) on a split bundle."""

    bundle: SplitBundle
    alpha: np.ndarray
    Phi: np.ndarray

    def __post_init__(self):
        n, r = self.bundle.grid.n, self.bundle.rank
        self.alpha = np.asarray(self.alpha, dtype=complex)
        self.Phi = np.asarray(self.Phi, dtype=complex)
        for x in (self.alpha, self.Phi):
            if x.shape != (n, n, r, r):
                raise ShapeError(f"pair fields must have shape {(n, n, r, r)}, got {x.shape}")

    @property
    def grid(self) -> TorusGrid:
        return self.bundle.grid

    @property
    def degrees(self):
        return self.bundle.degrees

    @property
    def a(self) -> TwistedField:
        return self.bundle.field(self.alpha, "01")

    @property
    def phi(self) -> TwistedField:
        return self.bundle.field(self.Phi, "10")

    def __add__(self, dx: "TangentPair") -> "HiggsPair":
        return HiggsPair(self.bundle, self.alpha + dx.da, self.Phi + dx.dphi)

    def __sub__(self, other: "HiggsPair") -> "TangentPair":
        return TangentPair(self.bundle, self.alpha - other.alpha, self.Phi - other.Phi)

    def copy(self) -> "HiggsPair":
        return HiggsPair(self.bundle, self.alpha.copy(), self.Phi.copy())


@dataclass
class TangentPair:
    """Deformation (da, dphi) of a pair; same twist pattern as the base."""

    bundle: SplitBundle
    da: np.ndarray
    dphi: np.ndarray

    def __add__(self, other):
        return TangentPair(self.bundle, self.da + other.da, self.dphi + other.dphi)

    def __sub__(self, other):
        return TangentPair(self.bundle, self.da - other.da, self.dphi - other.dphi)

    def __mul__(self, c):
        return TangentPair(self.bundle, self.da * c, self.dphi * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @staticmethod
    def zeros(bundle):
        return TangentPair(bundle, bundle.zeros(), bundle.zeros())


def tangent_inner(d1: TangentPair, d2: TangentPair) -> complex:
    """Hermitian form whose real part is the tangent metric."""
    cell = d1.bundle.grid.cell
    return complex(TANGENT_WEIGHT * cell * (np.vdot(d2.da, d1.da) + np.vdot(d2.dphi, d1.dphi)))


def tangent_norm(d: TangentPair) -> float:
    return float(np.sqrt(max(tangent_inner(d, d).real, 0.0)))


def dbar_A(bundle: SplitBundle, alpha, u):
    """d_A-bar of End-valued 0-form coefficients: du/dzbar + [alpha, u]."""
    return bundle.ops.dzbar(u) + comm(alpha, u)


def hermitian_moment(y: HiggsPair) -> np.ndarray:
    """M = i*mu(y), Hermitian at every site."""
    b = y.bundle
    X = b.ops.dz(y.alpha)
    al, Ph = y.alpha, y.Phi
    return b.D + 2.0 * (X + herm(X)) + 2.0 * (comm(al, herm(al)) + comm(Ph, herm(Ph)))


def moment_map(y: HiggsPair) -> TwistedField:
    """mu(y) = *(F_A + [phi, phi^*]) as an End-valued 0-form; i*mu is Hermitian."""
    return y.bundle.field(-1j * hermitian_moment(y), "0")


def chern_curvature(y: HiggsPair) -> TwistedField:
    """F_A as the dvol coefficient of a 2-form; i*F_A is Hermitian."""
    b = y.bundle
    X = b.ops.dz(y.alpha)
    iF = b.D + 2.0 * (X + herm(X)) + 2.0 * comm(y.alpha, herm(y.alpha))
    return b.field(-1j * iF, "2")


def energy_of_moment(M, cell) -> float:
    return float(np.sum(np.abs(M) ** 2) * cell)


def ymh_energy(y: HiggsPair) -> float:
    """|F_A + [phi, phi^*]|^2_{L2}."""
    return energy_of_moment(hermitian_moment(y), y.grid.cell)


def spectrum_sites(y: HiggsPair) -> np.ndarray:
    """Sorted eigenvalues of i*mu at every site, shape (n, n, r)."""
    return np.linalg.eigvalsh(hermitian_moment(y))


def spectrum_mean(y: HiggsPair) -> np.ndarray:
    s = spectrum_sites(y)
    return s.reshape(-1, s.shape[-1]).mean(axis=0)


def infinitesimal_action(y: HiggsPair, u) -> TangentPair:
    """rho_y(u) = (-d_A-bar u, [u, Phi]) for u in Lie(G^C)."""
    return TangentPair(y.bundle, -dbar_A(y.bundle, y.alpha, u), comm(u, y.Phi))


def infinitesimal_action_adjoint(y: HiggsPair, d: TangentPair) -> np.ndarray:
    """rho_y^* with respect to the tangent metric and int tr(u w^*) on 0-forms."""
    b = y.bundle
    # adjoint of d/dzbar is -d/dz, adjoint of ad(alpha) is ad(alpha^*)
    t1 = b.ops.dz(d.da) - comm(herm(y.alpha), d.da)
    t2 = comm(d.dphi, herm(y.Phi))
    return TANGENT_WEIGHT * (t1 + t2)


def grad_parts(y: HiggsPair, M=None):
    b = y.bundle
    if M is None:
        M = hermitian_moment(y)
    return -dbar_A(b, y.alpha, M), comm(M, y.Phi)


def grad_ymh(y: HiggsPair) -> TangentPair:
    """Gradient of YMH in the tangent metric; the flow is dy/dt = -grad."""
    da, dphi = grad_parts(y)
    return TangentPair(y.bundle, da, dphi)


def grad_norm(y: HiggsPair, M=None) -> float:
    da, dphi = grad_parts(y, M)
    return float(np.sqrt(TANGENT_WEIGHT * y.grid.cell * (np.sum(np.abs(da) ** 2) + np.sum(np.abs(dphi) ** 2))))


def grad_ymh_unitary(y: HiggsPair) -> TangentPair:
    """Same gradient computed from the unitary pair (d_A, psi), psi = phi + phi^*.

    Real coordinates, A' = A - A_0 = A_x dx + A_y dy, f = *(F_A + psi^psi):
        dA/dt   = -d_A^* (f dvol) = -(nabla_y f) dx + (nabla_x f) dy
        dpsi/dt = [psi_y, f] dx - [psi_x, f] dy
    and the (0,1) part of dA/dt, the (1,0) part of dpsi/dt give -grad.
    """
    b = y.bundle
    ops = b.ops
    al, Ph = y.alpha, y.Phi
    alh, Phh = herm(al), herm(Ph)
    Ax = al - alh
    Ay = -1j * (al + alh)
    px = Ph + Phh
    py = 1j * (Ph - Phh)
    F0 = -1j * b.D
    Fxy = F0 + ops.dx(Ay) - ops.dy(Ax) + comm(Ax, Ay)
    f = Fxy + comm(px, py)
    nx = ops.dx(f) + comm(Ax, f)
    ny = ops.dy(f) + comm(Ay, f)
    At_x, At_y = -ny, nx
    pt_x = comm(py, f)
    pt_y = -comm(px, f)
    a_dot = 0.5 * (At_x + 1j * At_y)
    p_dot = 0.5 * (pt_x - 1j * pt_y)
    return TangentPair(b, -a_dot, -p_dot)


def unitary_moment(y: HiggsPair) -> np.ndarray:
    """*(F_A + psi^psi) computed in real coordinates (for cross-checks)."""
    b = y.bundle
    ops = b.ops
    al, Ph = y.alpha, y.Phi
    Ax = al - herm(al)
    Ay = -1j * (al + herm(al))
    px = Ph + herm(Ph)
    py = 1j * (Ph - herm(Ph))
    return -1j * b.D + ops.dx(Ay) - ops.dy(Ax) + comm(Ax, Ay) + comm(px, py)


def holomorphy_density(y: HiggsPair) -> np.ndarray:
    return y.bundle.ops.dzbar(y.Phi) + comm(y.alpha, y.Phi)


def holomorphy_residual(y: HiggsPair) -> float:
    """|dbar_A phi|_{L2}; the 2-form is 2i (dPhi/dzbar + [alpha, Phi]) dvol."""
    h = holomorphy_density(y)
    return float(2.0 * np.sqrt(np.sum(np.abs(h) ** 2) * y.grid.cell))


def check_gauge(g) -> None:
    det = np.linalg.det(g)
    if not np.all(np.isfinite(det)) or np.min(np.abs(det)) < 1e-300:
        raise GaugeError("gauge transformation is singular at some site")
    c = np.linalg.cond(g)
    if not np.all(np.isfinite(c)):
        raise GaugeError("gauge transformation has infinite condition number")


def gauge_act(g, y: HiggsPair, ginv=None) -> HiggsPair:
    """g.(dbar_A, phi) = (g dbar_A g^-1, g phi g^-1)."""
    if isinstance(g, TwistedField):
        g = g.values
    if ginv is None:
        check_gauge(g)
        ginv = inv(g)
    b = y.bundle
    alpha = mm(mm(g, y.alpha) - b.ops.dzbar(g), ginv)
    return HiggsPair(b, alpha, mm(mm(g, y.Phi), ginv))


def metric_of_gauge(g) -> np.ndarray:
    """h = g^* g."""
    return mm(herm(g), g)


def _sigma_from_shifted(k):
    """sigma from eigenvalues kappa = lambda - 1 of h - I: sum kappa^2 / (1 + kappa)."""
    if np.any(1.0 + k <= 0):
        raise MetricError("metric is not positive definite")
    return np.sum(k * k / (1.0 + k), axis=-1)


def sigma_of(h) -> tuple[np.ndarray, float]:
    """Pointwise Tr h + Tr h^-1 - 2 rank and its supremum."""
    if isinstance(h, TwistedField):
        h = h.values
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - herm(h))) > 1e-10 * max(1.0, np.max(np.abs(h))):
        raise MetricError("metric is not Hermitian")
    r = h.shape[-1]
    k = np.linalg.eigvalsh(0.5 * (h + herm(h)) - np.eye(r))
    s = _sigma_from_shifted(k)
    return s, float(np.max(s))


def relative_sigma(h1, h2) -> tuple[np.ndarray, float]:
    """sigma(h1 h2^-1) via the eigenvalues of h2^{-1/2} (h1 - h2) h2^{-1/2}."""
    w, V = np.linalg.eigh(0.5 * (h2 + herm(h2)))
    if np.any(w <= 0):
        raise MetricError("metric is not positive definite")
    isq = (V / np.sqrt(w)[..., None, :]) @ herm(V)
    K = isq @ (h1 - h2) @ isq
    k = np.linalg.eigvalsh(0.5 * (K + herm(K)))
    s = _sigma_from_shifted(k)
    return s, float(np.max(s))


def hermitian_exp(u):
    """exp of a pointwise Hermitian field."""
    w, V = np.linalg.eigh(0.5 * (u + herm(u)))
    return (V * np.exp(w)[..., None, :]) @ herm(V)


def smooth_random_end(bundle: SplitBundle, rng, modes: int = 12, amplitude: float = 1.0,
                      hermitian=False) -> np.ndarray:
    """Random End-valued field built from the lowest resolved modes of each entry."""
    grid = bundle.grid
    n, r = grid.n, bundle.rank
    out = bundle.zeros()
    for i in range(r):
        for j in range(r):
            _, B = resolved_basis(grid, int(bundle.twist[i, j]), tuple(bundle.hol[i, j]))
            c = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
            f = (B[:, :modes] @ c).reshape(n, n)
            out[:, :, i, j] = f * amplitude / np.sqrt(2 * np.pi * modes)
    if hermitian:
        out = 0.5 * (out + herm(out))
    return out


def random_pair(bundle: SplitBundle, rng, amplitude=0.3, modes=12) -> HiggsPair:
    return HiggsPair(bundle, smooth_random_end(bundle, rng, modes, amplitude),
                     smooth_random_end(bundle, rng, modes, amplitude))


def random_tangent(bundle: SplitBundle, rng, amplitude=1.0, modes=12) -> TangentPair:
    return TangentPair(bundle, smooth_random_end(bundle, rng, modes, amplitude),
                       smooth_random_end(bundle, rng, modes, amplitude))


def fd_gradient_errors(y: HiggsPair, rng, directions: int = 10, h: float = 1e-5,
                       amplitude: float = 1.0) -> list:
    """|<grad, d> - DD_d YMH| / (1 + |DD|) for random smooth d, central differences."""
    g = grad_ymh(y)
    out = []
    for _ in range(directions):
        d = random_tangent(y.bundle, rng, amplitude)
        dd = (ymh_energy(y + d * h) - ymh_energy(y + d * (-h))) / (2 * h)
        out.append(abs(tangent_inner(g, d).real - dd) / (1.0 + abs(dd)))
    return out
