import numpy as np
import pytest

from higgslab.errors import DomainError, NotConvergedError
from higgslab.higgs_core import SplitBundle, TangentPair, random_pair
from higgslab.slice_lab import (build_critical, classify_limit, default_negative_block, dominated,
                                filtration_degrees, harmonic_h1, negative_component,
                                orthogonality_residual, quadratic_ratios, slice_residual)


@pytest.mark.parametrize("degs,dim", [((1, -1), 2), ((2, -2), 4), ((3, -1), 4)])
def test_h1_dimension(degs, dim):
    x = build_critical(degs, n=16)
    assert harmonic_h1(x, default_negative_block(x)).dim == dim


def test_basis_is_in_slice(x11, h11):
    for h in h11.basis:
        hol, orth = slice_residual(x11, h)
        assert hol < 1e-10 and orth < 1e-10


def test_coordinates_round_trip(h11):
    c = np.array([0.3 - 0.1j, 1.2])
    assert np.allclose(h11.coordinates(h11.element(c)), c)


def test_negative_component_projects(x11, rng):
    b = x11.bundle
    d = TangentPair(b, rng.normal(size=b.zeros().shape) + 0j, b.zeros())
    neg = negative_component(x11, d)
    assert np.all(neg.da[..., 1, 0] == 0) and np.all(neg.da[..., 0, 0] == 0)
    assert np.allclose(neg.da[..., 0, 1], d.da[..., 0, 1])


def test_gauge_direction_is_not_orthogonal(x11, rng):
    from higgslab.higgs_core import infinitesimal_action, smooth_random_end
    d = infinitesimal_action(x11.pair, smooth_random_end(x11.bundle, rng, amplitude=0.1))
    assert orthogonality_residual(x11, d) > 1e-3


def test_quadratic_ratios(x11, h11):
    _, _, r = quadratic_ratios(x11, h11.element(np.array([1.0, 0.0])), 0.1, 2)
    assert all(3.4 <= v <= 4.6 for v in r)


def test_classify_limit(x11, rng):
    assert classify_limit(x11.pair).degrees == (-1, 1)
    with pytest.raises(NotConvergedError):
        classify_limit(random_pair(SplitBundle.make(x11.grid, [-1, 1]), rng, 0.3))


def test_dominated():
    assert dominated((0, 0), (1, -1))
    assert dominated((1, -1), (2, -2))
    assert not dominated((2, -2), (1, -1))
    assert not dominated((0, 1), (1, -1))


def test_filtration_rejects_positive_block(x11, rng):
    b = x11.bundle
    da = b.zeros()
    da[..., 1, 0] = 1.0
    with pytest.raises(DomainError):
        filtration_degrees(x11, TangentPair(b, da, b.zeros()))
    assert filtration_degrees(x11, negative_component(x11, TangentPair(b, da, b.zeros()))) == (-1, 1)


def test_build_critical_sorts_degrees():
    x = build_critical((2, -1, 0), n=16)
    assert tuple(x.degrees) == (-1, 0, 2)
    assert x.spectrum == (-1.0, 0.0, 2.0)
