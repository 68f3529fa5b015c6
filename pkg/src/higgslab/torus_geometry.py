"""Flat torus of area 2*pi, twisted line-bundle sections and their derivatives.

Coordinates: lattice coordinates (u, v) in [0, 1)^2 with z = ell*(u + tau*v),
ell chosen so the area is 2*pi.  A section of the degree-m line bundle with
flat holonomy (a, b) is stored untwisted on the n x n grid and satisfies

    s(u + 1, v) = exp(2*pi*i*m*v) s(u, v),    s(u, v + 1) = s(u, v),

with Chern connection  d - 2*pi*i*a du - 2*pi*i*(m*u + b) dv.  Its curvature is
-i*m dvol, so i*F = m and the slope equals the degree.

Derivatives are pseudo-spectral.  Along u the field is demodulated by
exp(-2*pi*i*m*v*u) (which makes it u-periodic) before the FFT, along v it is
periodic already.  Both covariant derivatives are exactly anti-Hermitian on
the grid, so discrete integration by parts holds to rounding.

Field layout is site-major: values[iu, iv, row, col].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigError, ShapeError

FORM_TYPES = ("0", "01", "10", "2")

# Relative SVD threshold for kernel dimensions.
KERNEL_RTOL = 1e-6


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n x n grid on C / ell*(Z + tau Z) with area 2*pi."""

    n: int
    tau: complex = 1j

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise ConfigError(f"resolution must be an integer >= 16, got {self.n}")
        if self.n % 2:
            raise ConfigError(f"resolution must be even, got {self.n}")
        if complex(self.tau).imag <= 0:
            raise ConfigError("modulus must have positive imaginary part")
        object.__setattr__(self, "tau", complex(self.tau))

    @cached_property
    def area_scale(self) -> float:
        return float(np.sqrt(2 * np.pi / self.tau.imag))

    @property
    def ell(self) -> float:
        return self.area_scale

    @property
    def sites(self) -> int:
        return self.n * self.n

    @cached_property
    def cell(self) -> float:
        return 2 * np.pi / self.n**2

    @cached_property
    def uv(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(self.n) / self.n
        return np.meshgrid(t, t, indexing="ij")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*k in FFT order.

        The Nyquist mode keeps k = -n/2.  Zeroing it would make d/du real but adds
        spurious null directions to every twisted bundle.
        """
        return 2 * np.pi * np.fft.fftfreq(self.n, 1.0 / self.n)

    @property
    def total_measure(self) -> float:
        return self.cell * self.sites

    def z_of(self, u, v):
        return self.ell * (np.asarray(u) + self.tau * np.asarray(v))

    @cached_property
    def cutoff(self) -> float:
        """Bochner-Laplacian eigenvalue bound of the resolved subspace: a quarter of k_nyq^2."""
        return 0.25 * (np.pi * self.n / self.ell) ** 2


def make_grid(n: int, tau: complex = 1j) -> TorusGrid:
    return TorusGrid(n, tau)


@dataclass(frozen=True)
class BackgroundConnection:
    """Constant-curvature unitary connection on the degree-m line bundle."""

    degree: int
    holonomy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        a, b = self.holonomy
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "holonomy", (float(a), float(b)))


def _as_int_array(twist, shape):
    t = np.asarray(twist, dtype=int)
    if t.shape == ():
        t = np.full(shape, int(t))
    return t


@dataclass
class TwistedField:
    """Matrix-valued lattice field; entry [r, c] is a section of degree twist[r, c]."""

    grid: TorusGrid
    values: np.ndarray
    twist: np.ndarray
    holonomy: np.ndarray = None
    form_type: str = "0"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = self.grid.n
        if v.ndim == 2:
            v = v[:, :, None, None]
        if v.ndim != 4 or v.shape[:2] != (n, n):
            raise ShapeError(f"values must have shape (n, n, rows, cols), got {v.shape}")
        self.values = v
        self.twist = _as_int_array(self.twist, v.shape[2:])
        if self.twist.shape != v.shape[2:]:
            raise ShapeError("twist shape does not match the fiber shape")
        if self.holonomy is None:
            self.holonomy = np.zeros(v.shape[2:] + (2,))
        self.holonomy = np.asarray(self.holonomy, dtype=float)
        if self.holonomy.shape == (2,):
            self.holonomy = np.broadcast_to(self.holonomy, v.shape[2:] + (2,)).copy()
        if self.holonomy.shape != v.shape[2:] + (2,):
            raise ShapeError("holonomy shape does not match the fiber shape")
        if self.form_type not in FORM_TYPES:
            raise ShapeError(f"unknown form type {self.form_type!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[2], self.values.shape[3]

    def like(self, values, form_type=None) -> "TwistedField":
        return TwistedField(self.grid, values, self.twist, self.holonomy,
                            self.form_type if form_type is None else form_type)

    def _check_same(self, other: "TwistedField"):
        if (other.grid != self.grid or other.shape != self.shape or other.form_type != self.form_type
                or not np.array_equal(other.twist, self.twist)
                or not np.allclose(other.holonomy, self.holonomy)):
            raise ShapeError("fields differ in grid, shape, twist or form type")

    def __add__(self, other):
        self._check_same(other)
        return self.like(self.values + other.values)

    def __sub__(self, other):
        self._check_same(other)
        return self.like(self.values - other.values)

    def __mul__(self, c):
        return self.like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)

    def adjoint(self) -> "TwistedField":
        """Pointwise conjugate transpose; twists and holonomies are negated."""
        ft = {"0": "0", "01": "10", "10": "01", "2": "2"}[self.form_type]
        return TwistedField(self.grid, np.conj(np.swapaxes(self.values, 2, 3)),
                            -self.twist.T, -np.swapaxes(self.holonomy, 0, 1), ft)

    def matmul(self, other: "TwistedField", form_type: str = "0") -> "TwistedField":
        """Pointwise matrix product; twists must compose (t[r,l] + t'[l,c] constant in l)."""
        if other.grid != self.grid or self.shape[1] != other.shape[0]:
            raise ShapeError("incompatible fiber shapes for product")
        tw = self.twist[:, :, None] + other.twist[None, :, :]
        hol = self.holonomy[:, :, None, :] + other.holonomy[None, :, :, :]
        if np.any(tw != tw[:, :1, :]) or not np.allclose(hol, hol[:, :1, :, :]):
            raise ShapeError("twists do not compose")
        return TwistedField(self.grid, self.values @ other.values, tw[:, 0, :], hol[:, 0, :, :],
                            form_type)


def scalar_field(grid: TorusGrid, values, degree: int = 0, holonomy=(0.0, 0.0),
                 form_type: str = "0") -> TwistedField:
    v = np.asarray(values, dtype=complex)
    if v.shape == ():
        v = np.full((grid.n, grid.n), complex(v))
    return TwistedField(grid, v.reshape(grid.n, grid.n, 1, 1), np.array([[degree]]),
                        np.array([[holonomy]], dtype=float), form_type)


class TwistOps:
    """Covariant derivatives for a fixed array of entry twists and holonomies.

    Fields passed to the methods have shape (n, n) + twist.shape.
    """

    def __init__(self, grid: TorusGrid, twist, holonomy):
        self.grid = grid
        twist = np.asarray(twist, dtype=float)
        holonomy = np.asarray(holonomy, dtype=float)
        self.twist = twist
        U, V = grid.uv
        ex = (slice(None), slice(None)) + (None,) * twist.ndim
        U = U[ex]
        V = V[ex]
        a = holonomy[..., 0]
        b = holonomy[..., 1]
        self.mod = np.exp(2j * np.pi * twist * V * U)
        self.pot_u = 2j * np.pi * (twist * V - a)
        self.pot_v = -2j * np.pi * (twist * U + b)
        kshape = (grid.n,) + (1,) * (1 + twist.ndim)
        self.ku = 1j * grid.wavenumbers.reshape(kshape)
        self.kv = 1j * grid.wavenumbers.reshape((1, grid.n) + (1,) * twist.ndim)
        tau = grid.tau
        ell = grid.ell
        den = ell * (tau - np.conj(tau))
        self.cz_bar = (tau / den, -1.0 / den)
        self.cz = (-np.conj(tau) / den, 1.0 / den)
        self.cx = (1.0 / ell, 0.0)
        self.cy = (-tau.real / (ell * tau.imag), 1.0 / (ell * tau.imag))

    def du(self, f):
        w = f * np.conj(self.mod)
        dw = np.fft.ifft(self.ku * np.fft.fft(w, axis=0), axis=0)
        return self.mod * dw + self.pot_u * f

    def dv(self, f):
        return np.fft.ifft(self.kv * np.fft.fft(f, axis=1), axis=1) + self.pot_v * f

    def _combo(self, c, f):
        out = c[0] * self.du(f)
        if c[1] != 0:
            out = out + c[1] * self.dv(f)
        return out

    def dzbar(self, f):
        return self._combo(self.cz_bar, f)

    def dz(self, f):
        return self._combo(self.cz, f)

    def dx(self, f):
        return self.cx[0] * self.du(f)

    def dy(self, f):
        return self._combo(self.cy, f)

    def bochner(self, f):
        """Bochner Laplacian -(nabla_x^2 + nabla_y^2); Landau levels |m|(2k+1)."""
        return -(self.dx(self.dx(f)) + self.dy(self.dy(f)))


def _key(twist, holonomy):
    t = np.asarray(twist, dtype=int)
    h = np.round(np.asarray(holonomy, dtype=float), 14)
    return t.shape, tuple(t.ravel()), tuple(h.ravel())


@lru_cache(maxsize=256)
def _ops_cached(grid, shape, tw, hol):
    return TwistOps(grid, np.array(tw, dtype=int).reshape(shape),
                    np.array(hol, dtype=float).reshape(shape + (2,)))


def twist_ops(grid: TorusGrid, twist, holonomy) -> TwistOps:
    shape, tw, hol = _key(twist, holonomy)
    return _ops_cached(grid, shape, tw, hol)


def _field_ops(f: TwistedField) -> TwistOps:
    return twist_ops(f.grid, f.twist, f.holonomy)


def _check_bg(f: TwistedField, bg: BackgroundConnection | None):
    if bg is None:
        return
    if np.any(f.twist != bg.degree) or not np.allclose(f.holonomy, bg.holonomy):
        raise ShapeError(f"field twist {f.twist.tolist()} does not match background degree {bg.degree}")


def dbar(f: TwistedField, bg: BackgroundConnection | None = None) -> TwistedField:
    """(0,1)-derivative.  0-form -> (0,1)-form coefficient; (1,0)-form -> 2-form (dvol coefficient)."""
    _check_bg(f, bg)
    d = _field_ops(f).dzbar(f.values)
    if f.form_type == "0":
        return f.like(d, "01")
    if f.form_type == "10":
        # dbar(g dz) = dg/dzbar dzbar^dz = 2i dg/dzbar dvol
        return f.like(2j * d, "2")
    raise ShapeError("dbar expects a 0-form or a (1,0)-form")


def del_(f: TwistedField, bg: BackgroundConnection | None = None) -> TwistedField:
    """(1,0)-derivative.  0-form -> (1,0)-form coefficient; (0,1)-form -> 2-form (dvol coefficient)."""
    _check_bg(f, bg)
    d = _field_ops(f).dz(f.values)
    if f.form_type == "0":
        return f.like(d, "10")
    if f.form_type == "01":
        return f.like(-2j * d, "2")
    raise ShapeError("del expects a 0-form or a (0,1)-form")


def dbar_adjoint(g: TwistedField, bg: BackgroundConnection | None = None) -> TwistedField:
    """L2 adjoint of dbar on 0-forms (coefficient inner product): -d/dz."""
    _check_bg(g, bg)
    if g.form_type != "01":
        raise ShapeError("dbar_adjoint expects a (0,1)-form")
    return g.like(-_field_ops(g).dz(g.values), "0")


def inner_l2(f: TwistedField, g: TwistedField) -> complex:
    """<f, g> = int tr(f g^*) dvol on coefficients, cell-measure quadrature."""
    f._check_same(g)
    return complex(np.sum(f.values * np.conj(g.values)) * f.grid.cell)


def norm_l2(f: TwistedField) -> float:
    return float(np.sqrt(max(inner_l2(f, f).real, 0.0)))


def sup_norm(f) -> float:
    """Max over sites of the fiberwise Frobenius norm."""
    vals = f.values if isinstance(f, TwistedField) else np.asarray(f)
    return float(np.sqrt(np.max(np.sum(np.abs(vals) ** 2, axis=(2, 3)))))


def operator_matrix(apply, grid: TorusGrid) -> np.ndarray:
    """Dense matrix of a scalar-field operator acting on flattened (n*n) grids."""
    N = grid.sites
    eye = np.eye(N, dtype=complex).reshape(grid.n, grid.n, N)
    out = apply(eye)
    return out.reshape(N, N)


@lru_cache(maxsize=64)
def _resolved(grid: TorusGrid, degree: int, hol: tuple[float, float]):
    ops = TwistOps(grid, np.array([degree]), np.array([hol]))
    L = operator_matrix(ops.bochner, grid)
    L = 0.5 * (L + L.conj().T)
    w, vecs = np.linalg.eigh(L)
    keep = w <= grid.cutoff
    # orthonormal in the cell-measure inner product
    B = vecs[:, keep] / np.sqrt(grid.cell)
    return w[keep], B


def resolved_basis(grid: TorusGrid, degree: int, holonomy=(0.0, 0.0)):
    """Low Bochner eigenspace of the degree-m bundle: eigenvalues and grid basis (n*n, K).

    Square discretisations have index zero, so the full-grid dbar acquires spurious
    near-kernel vectors at the top of the spectrum; kernel counts and harmonic spaces
    are computed on this resolved subspace instead.
    """
    a, b = holonomy
    return _resolved(grid, int(degree), (round(float(a) % 1.0, 14), round(float(b) % 1.0, 14)))


def _reduce_hol(holonomy):
    a, b = holonomy
    return (float(a) % 1.0, float(b) % 1.0)


def dbar_matrix_resolved(grid: TorusGrid, bg: BackgroundConnection) -> np.ndarray:
    hol = _reduce_hol(bg.holonomy)
    _, B = resolved_basis(grid, bg.degree, hol)
    ops = TwistOps(grid, np.array([bg.degree]), np.array([hol]))
    cols = B.reshape(grid.n, grid.n, -1)
    return ops.dzbar(cols).reshape(grid.sites, -1)


def kernel_dimension(singular_values, rtol: float = KERNEL_RTOL) -> int:
    s = np.asarray(singular_values)
    if s.size == 0 or s.max() == 0:
        return int(s.size)
    return int(np.sum(s < rtol * s.max()))


def dbar_kernel_dim(grid: TorusGrid, bg: BackgroundConnection, rtol: float = KERNEL_RTOL) -> int:
    """dim ker dbar on degree-m scalars, via SVD on the resolved subspace."""
    s = np.linalg.svd(dbar_matrix_resolved(grid, bg), compute_uv=False)
    return kernel_dimension(s, rtol)


def background_curvature(grid: TorusGrid, bg: BackgroundConnection) -> tuple[np.ndarray, float]:
    """Pointwise i*F of the discrete connection and the commutator residual.

    i*F is read off the discrete commutator i[nabla_x, nabla_y] applied to the
    resolved subspace, as a density-of-states weighted average
    sum_k conj(e_k) (i[nx, ny] e_k) / sum_k |e_k|^2 at each site.
    """
    hol = _reduce_hol(bg.holonomy)
    _, B = resolved_basis(grid, bg.degree, hol)
    ops = TwistOps(grid, np.array([bg.degree]), np.array([hol]))
    E = B.reshape(grid.n, grid.n, -1)
    C = 1j * (ops.dx(ops.dy(E)) - ops.dy(ops.dx(E)))
    dens = np.sum(np.abs(E) ** 2, axis=-1)
    curv = np.sum(np.conj(E) * C, axis=-1).real / dens
    resid = np.linalg.norm(C - bg.degree * E) / np.linalg.norm(E)
    return curv, float(resid)


def integrated_degree(grid: TorusGrid, bg: BackgroundConnection) -> float:
    """(1/2pi) int i tr F."""
    curv, _ = background_curvature(grid, bg)
    return float(np.sum(curv) * grid.cell / (2 * np.pi))


def evaluate_at(f: TwistedField, u: float, v: float) -> np.ndarray:
    """Trigonometric interpolation of every entry at lattice point (u, v); returns (rows, cols)."""
    grid = f.grid
    n = grid.n
    U, V = grid.uv
    ops = _field_ops(f)
    w = f.values * np.conj(ops.mod)      # u-periodic
    k = np.fft.fftfreq(n, 1.0 / n)
    wk = np.fft.fft(w, axis=0) / n
    # symmetric treatment of the Nyquist mode keeps the interpolant real for real data
    phase_u = np.exp(2j * np.pi * k * u)
    phase_u[n // 2] = np.cos(np.pi * n * u)
    col = np.tensordot(phase_u, wk, axes=(0, 0))      # (n_v, rows, cols), demodulated at u
    vgrid = V[0]
    m = f.twist[None, :, :]
    col = col * np.exp(2j * np.pi * m * vgrid[:, None, None] * u)
    ck = np.fft.fft(col, axis=0) / n
    phase_v = np.exp(2j * np.pi * k * v)
    phase_v[n // 2] = np.cos(np.pi * n * v)
    return np.tensordot(phase_v, ck, axes=(0, 0))
