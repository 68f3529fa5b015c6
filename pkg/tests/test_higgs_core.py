import numpy as np
import pytest

from higgslab.errors import GaugeError, MetricError
from higgslab.higgs_core import (SplitBundle, TangentPair, fd_gradient_errors, gauge_act, grad_norm,
                                 grad_ymh, grad_ymh_unitary, hermitian_exp, hermitian_moment, inv,
                                 metric_of_gauge, mm, random_pair, relative_sigma, sigma_of,
                                 smooth_random_end, spectrum_mean, tangent_inner, ymh_energy)


def _bundle(grid, degs=(-1, 1)):
    return SplitBundle.make(grid, list(degs))


def test_mm_and_inv(rng):
    a = rng.normal(size=(4, 4, 2, 2)) + 1j * rng.normal(size=(4, 4, 2, 2))
    b = rng.normal(size=(4, 4, 2, 2))
    assert np.allclose(mm(a, b), a @ b)
    assert np.allclose(mm(inv(a), a), np.eye(2))
    c = rng.normal(size=(3, 3, 3, 3))
    assert np.allclose(inv(c), np.linalg.inv(c))


def test_split_energy(x11):
    assert np.isclose(ymh_energy(x11.pair), 4 * np.pi, rtol=1e-12)
    assert grad_norm(x11.pair) < 1e-12
    assert np.allclose(spectrum_mean(x11.pair), [-1, 1])


def test_gradient_matches_finite_differences(grid16, rng):
    b = _bundle(grid16)
    y = random_pair(b, rng, 0.3)
    assert max(fd_gradient_errors(y, rng, 4)) < 1e-6


def test_unitary_gradient(grid16, rng):
    b = _bundle(grid16, (-2, 1))
    y = random_pair(b, rng, 0.3)
    a, u = grad_ymh(y), grad_ymh_unitary(y)
    scale = max(np.abs(a.da).max(), np.abs(a.dphi).max())
    assert max(np.abs(a.da - u.da).max(), np.abs(a.dphi - u.dphi).max()) < 1e-8 * scale


def test_energy_is_unitary_invariant(grid16, rng):
    b = _bundle(grid16)
    y = random_pair(b, rng, 0.3)
    H = smooth_random_end(b, rng, amplitude=0.5, hermitian=True)
    w, V = np.linalg.eigh(H)
    k = (V * np.exp(1j * w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    assert np.allclose(metric_of_gauge(k), np.eye(2), atol=1e-10)
    # exact up to aliasing of the pointwise products in k . y
    assert np.isclose(ymh_energy(gauge_act(k, y)), ymh_energy(y), rtol=1e-7)


def test_hermitian_exp_is_positive(grid16, rng):
    b = _bundle(grid16)
    h = hermitian_exp(smooth_random_end(b, rng, amplitude=0.5, hermitian=True))
    assert np.all(np.linalg.eigvalsh(h) > 0)


def test_moment_map_is_hermitian(grid16, rng):
    y = random_pair(_bundle(grid16), rng, 0.3)
    M = hermitian_moment(y)
    assert np.allclose(M, np.conj(np.swapaxes(M, -1, -2)))


def test_sigma(grid16, rng):
    b = _bundle(grid16)
    I = b.identity()
    assert sigma_of(metric_of_gauge(I))[1] == 0.0
    g = I + smooth_random_end(b, rng, amplitude=0.1)
    h = metric_of_gauge(g)
    s = sigma_of(h)[1]
    assert s > 0
    assert np.isclose(relative_sigma(h, h)[1], 0.0, atol=1e-12)
    with pytest.raises(MetricError):
        sigma_of(-metric_of_gauge(I))


def test_singular_gauge(grid16):
    b = _bundle(grid16)
    with pytest.raises(GaugeError):
        gauge_act(b.zeros(), random_pair(b, np.random.default_rng(0)))


def test_tangent_inner_positive(grid16, rng):
    b = _bundle(grid16)
    d = TangentPair(b, smooth_random_end(b, rng), smooth_random_end(b, rng))
    assert tangent_inner(d, d).real > 0
