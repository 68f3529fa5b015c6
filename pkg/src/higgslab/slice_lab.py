"""Split critical points, eigen-blocks of ad(i beta), harmonic H^1 of negative
blocks, slice residuals and classification of flow limits.

Summands are sorted by increasing degree, so at a critical point the strictly
negative blocks Hom(E_j, E_k) (lambda_k < lambda_j) sit at matrix entries
[k, j] with k < j, above the diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousLimit, DomainError, NotConvergedError, ShapeError
from .higgs_core import (HiggsPair, SplitBundle, TangentPair, TANGENT_WEIGHT, grad_norm,
                         hermitian_moment, holomorphy_residual, infinitesimal_action_adjoint,
                         spectrum_mean)
from .torus_geometry import TorusGrid, TwistOps, kernel_dimension, resolved_basis

H1_RTOL = 1e-6
HN_ROUND_TOL = 0.05
# seed for the fixed reference vectors that canonicalize bases of H^1
_CANON_SEED = 20240611


@dataclass
class CriticalPoint:
    pair: HiggsPair
    beta: object
    spectrum: tuple
    consts: tuple
    blocks: dict
    order: tuple

    @property
    def bundle(self) -> SplitBundle:
        return self.pair.bundle

    @property
    def degrees(self):
        return self.pair.degrees

    @property
    def grid(self) -> TorusGrid:
        return self.pair.grid

    def block_eigenvalue(self, j, k) -> float:
        """Eigenvalue of ad(i beta) on Hom(E_j, E_k)."""
        return float(self.spectrum[k] - self.spectrum[j])


@dataclass
class HarmonicBasis:
    block: tuple
    source: dict
    target: dict
    basis: list
    dim: int
    coeffs: np.ndarray = field(repr=False, default=None)

    def coordinates(self, dx: TangentPair) -> np.ndarray:
        """Coefficients of the orthogonal projection of dx onto the basis."""
        from .higgs_core import tangent_inner
        return np.array([tangent_inner(dx, h) for h in self.basis])

    def element(self, coords) -> TangentPair:
        coords = np.asarray(coords, dtype=complex)
        if coords.shape != (self.dim,):
            raise ShapeError(f"expected {self.dim} coordinates")
        out = TangentPair.zeros(self.basis[0].bundle) if self.basis else None
        for c, h in zip(coords, self.basis):
            out = out + h * c
        return out


@dataclass
class HNType:
    spectrum: tuple
    degrees: tuple
    multiplicities: dict
    rounding_error: float

    def __eq__(self, other):
        if isinstance(other, HNType):
            return self.degrees == other.degrees
        return tuple(sorted(other)) == self.degrees

    def __hash__(self):
        return hash(self.degrees)


def build_critical(degrees, higgs_consts=None, flat_params=None, grid: TorusGrid | None = None,
                   n: int = 32, tau: complex = 1j) -> CriticalPoint:
    """Direct sum of constant-curvature line bundles with Phi = diag(c_j)."""
    from .torus_geometry import make_grid
    degrees = [int(d) for d in degrees]
    r = len(degrees)
    if higgs_consts is None:
        higgs_consts = [0.0] * r
    if flat_params is None:
        flat_params = [(0.0, 0.0)] * r
    if len(higgs_consts) != r or len(flat_params) != r:
        raise ShapeError("degrees, Higgs constants and holonomies must have equal length")
    if grid is None:
        grid = make_grid(n, tau)
    order = tuple(sorted(range(r), key=lambda i: degrees[i]))
    degs = [degrees[i] for i in order]
    consts = tuple(complex(higgs_consts[i]) for i in order)
    hols = [tuple(flat_params[i]) for i in order]
    b = SplitBundle.make(grid, degs, hols)
    Phi = b.zeros()
    for i, c in enumerate(consts):
        Phi[:, :, i, i] = c
    pair = HiggsPair(b, b.zeros(), Phi)
    M = hermitian_moment(pair)
    spec = tuple(float(d) for d in degs)
    blocks = {"negative": [], "zero": [], "positive": []}
    for j in range(r):
        for k in range(r):
            lam = spec[k] - spec[j]
            key = "negative" if lam < 0 else ("positive" if lam > 0 else "zero")
            blocks[key].append((j, k))
    return CriticalPoint(pair, b.field(-1j * M, "0"), spec, consts, blocks, order)


def negative_mask(bundle: SplitBundle) -> np.ndarray:
    d = np.asarray(bundle.degrees)
    # entry [k, j] is Hom(E_j, E_k); negative when d_k < d_j
    return (d[:, None] < d[None, :]).astype(float)


def negative_component(x: CriticalPoint, dx: TangentPair) -> TangentPair:
    """Projection onto the strictly negative eigen-blocks of ad(i beta)."""
    m = negative_mask(x.bundle)
    return TangentPair(dx.bundle, dx.da * m, dx.dphi * m)


def _block_ops(x: CriticalPoint, j, k):
    m = int(x.degrees[k] - x.degrees[j])
    h = np.asarray(x.bundle.holonomies[k]) - np.asarray(x.bundle.holonomies[j])
    hol = (float(h[0]) % 1.0, float(h[1]) % 1.0)
    return m, hol


def _slice_operator(x: CriticalPoint, j, k):
    """Stacked (L2, L1^*) on V x V for entry [k, j]; columns are (A, P) coefficients."""
    grid = x.grid
    m, hol = _block_ops(x, j, k)
    _, B = resolved_basis(grid, m, hol)
    K = B.shape[1]
    ops = TwistOps(grid, np.full(K, m), np.tile(np.array(hol), (K, 1)))
    E = B.reshape(grid.n, grid.n, K)
    dzb = ops.dzbar(E).reshape(grid.sites, K)
    dz = ops.dz(E).reshape(grid.sites, K)
    delta = x.consts[j] - x.consts[k]
    # L2 = dPhi/dzbar + delta*A,  L1^* ~ dA/dz + conj(delta)*P
    top = np.hstack([delta * B, dzb])
    bot = np.hstack([dz, np.conj(delta) * B])
    return np.vstack([top, bot]) * np.sqrt(grid.cell), B, m, hol


def harmonic_h1(x: CriticalPoint, block) -> HarmonicBasis:
    """Orthonormal basis of ker L1^* and ker L2 on the block Hom(E_j, E_k)."""
    j, k = block
    r = x.bundle.rank
    if not (0 <= j < r and 0 <= k < r):
        raise DomainError("block index out of range")
    if not x.spectrum[k] < x.spectrum[j]:
        raise DomainError("harmonic_h1 needs a strictly negative block (lambda_k < lambda_j)")
    L, B, m, hol = _slice_operator(x, j, k)
    _, s, vh = np.linalg.svd(L, full_matrices=False)
    K2 = L.shape[1]
    s_full = np.zeros(K2)
    s_full[:s.size] = s
    null = s_full < H1_RTOL * s_full.max()
    N = vh[null].conj().T              # (2K, dim)
    dim = N.shape[1]
    expected = int(x.degrees[j] - x.degrees[k]) if x.consts[j] == x.consts[k] else 0
    if dim != expected:
        raise DomainError(f"harmonic space has dimension {dim}, Riemann-Roch count is {expected}")
    # canonical orientation: project fixed random vectors, orthonormalize, fix phases
    rng = np.random.default_rng(_CANON_SEED)
    R = rng.standard_normal((K2, dim)) + 1j * rng.standard_normal((K2, dim))
    Q, _ = np.linalg.qr(N @ (N.conj().T @ R))
    for i in range(dim):
        q = Q[:, i]
        idx = int(np.argmax(np.abs(q) > 1e-6 * np.abs(q).max()))
        Q[:, i] = q * (np.abs(q[idx]) / q[idx])
    n = x.grid.n
    K = B.shape[1]
    basis = []
    for i in range(dim):
        cA, cP = Q[:K, i], Q[K:, i]
        da = x.bundle.zeros()
        dphi = x.bundle.zeros()
        da[:, :, k, j] = (B @ cA).reshape(n, n) / np.sqrt(TANGENT_WEIGHT)
        dphi[:, :, k, j] = (B @ cP).reshape(n, n) / np.sqrt(TANGENT_WEIGHT)
        basis.append(TangentPair(x.bundle, da, dphi))
    src = {"degree": x.degrees[j], "const": x.consts[j], "holonomy": x.bundle.holonomies[j]}
    tgt = {"degree": x.degrees[k], "const": x.consts[k], "holonomy": x.bundle.holonomies[k]}
    return HarmonicBasis((j, k), src, tgt, basis, dim, Q)


def default_negative_block(x: CriticalPoint):
    """The extreme negative block Hom(E_top, E_bottom)."""
    r = x.bundle.rank
    return (r - 1, 0)


def orthogonality_residual(x: CriticalPoint, dx: TangentPair) -> float:
    w = infinitesimal_action_adjoint(x.pair, dx)
    return float(np.sqrt(np.sum(np.abs(w) ** 2) * x.grid.cell))


def slice_residual(x: CriticalPoint, dx: TangentPair) -> tuple[float, float]:
    """(holomorphy residual of x + dx, L2 norm of rho_x^* dx)."""
    return holomorphy_residual(x.pair + dx), orthogonality_residual(x, dx)


def sup_moment_deviation(x: CriticalPoint, y: HiggsPair) -> float:
    """sup over sites of the operator norm of mu(y) - beta."""
    D = hermitian_moment(y) - hermitian_moment(x.pair)
    return float(np.max(np.linalg.norm(D, ord=2, axis=(-2, -1))))


def quadratic_ratios(x: CriticalPoint, dx: TangentPair, eps0: float = 0.1, halvings: int = 2):
    eps = [eps0 / 2 ** i for i in range(halvings + 1)]
    dev = [sup_moment_deviation(x, x.pair + dx * e) for e in eps]
    return eps, dev, [dev[i] / dev[i + 1] for i in range(halvings)]


def classify_limit(y: HiggsPair, grad_tol: float = 1e-6) -> HNType:
    """Integer-rounded site average of the spectrum of i mu(y)."""
    gn = grad_norm(y)
    if not gn < grad_tol:
        raise NotConvergedError(f"pair is not converged (|grad| = {gn:.3e})")
    spec = np.sort(spectrum_mean(y))
    rounded = np.rint(spec)
    err = float(np.max(np.abs(spec - rounded)))
    if err >= HN_ROUND_TOL:
        raise AmbiguousLimit(f"spectrum {spec} is not within {HN_ROUND_TOL} of integers")
    degs = tuple(int(v) for v in rounded)
    mult = {d: degs.count(d) for d in sorted(set(degs))}
    return HNType(tuple(float(s) for s in spec), degs, mult, err)


def dominated(limit_degrees, degrees) -> bool:
    """HN dominance: partial sums of the decreasing sequences, equal totals."""
    a = np.sort(np.asarray(limit_degrees, dtype=float))[::-1]
    b = np.sort(np.asarray(degrees, dtype=float))[::-1]
    if a.size != b.size or abs(a.sum() - b.sum()) > 1e-6:
        return False
    return bool(np.all(np.cumsum(a) <= np.cumsum(b) + 1e-9))


def filtration_degrees(x: CriticalPoint, dx: TangentPair, tol: float = 1e-7) -> tuple:
    """Graded degrees of the filtration of x + dx, in increasing-slope order."""
    rest = dx - negative_component(x, dx)
    scale = max(1.0, float(np.sqrt(np.sum(np.abs(dx.da) ** 2 + np.abs(dx.dphi) ** 2) * x.grid.cell)))
    if np.sqrt(np.sum(np.abs(rest.da) ** 2 + np.abs(rest.dphi) ** 2) * x.grid.cell) > tol * scale:
        raise DomainError("deformation has components outside the negative blocks")
    _, orth = slice_residual(x, dx)
    if orth > tol * scale:
        raise DomainError(f"deformation is not orthogonal to the gauge orbit (residual {orth:.2e})")
    return tuple(int(d) for d in x.degrees)
