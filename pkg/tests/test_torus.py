import numpy as np
import pytest

from higgslab.errors import ConfigError, ShapeError
from higgslab.torus_geometry import (BackgroundConnection, dbar, dbar_adjoint, dbar_kernel_dim,
                                     del_, evaluate_at, inner_l2, integrated_degree, make_grid,
                                     norm_l2, resolved_basis, scalar_field, sup_norm)


@pytest.mark.parametrize("n", [15, 8, 17])
def test_bad_resolution(n):
    with pytest.raises(ConfigError):
        make_grid(n)


def test_bad_modulus():
    with pytest.raises(ConfigError):
        make_grid(16, 1 - 1j)


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.2j])
def test_area_is_two_pi(tau):
    g = make_grid(16, tau)
    assert np.isclose(g.total_measure, 2 * np.pi)
    assert np.isclose(g.ell ** 2 * complex(tau).imag, 2 * np.pi)


@pytest.mark.parametrize("m", [-2, -1, 0, 1, 2])
def test_degree_and_kernel_count(grid16, m):
    bg = BackgroundConnection(m)
    assert abs(integrated_degree(grid16, bg) - m) < 1e-8
    expect = max(m, 0) if m != 0 else 1
    assert dbar_kernel_dim(grid16, bg) == expect


def test_flat_nontrivial_holonomy_has_no_sections(grid16):
    assert dbar_kernel_dim(grid16, BackgroundConnection(0, (0.3, 0.1))) == 0


def test_inner_product(grid16, rng):
    _, B = resolved_basis(grid16, 2)
    a = scalar_field(grid16, (B[:, :5] @ rng.normal(size=5)).reshape(16, 16), 2)
    b = scalar_field(grid16, (B[:, :5] @ rng.normal(size=5)).reshape(16, 16), 2)
    assert np.isclose(inner_l2(a, b), np.conj(inner_l2(b, a)))
    assert norm_l2(a) > 0
    assert sup_norm(a) >= norm_l2(a) / np.sqrt(2 * np.pi) - 1e-12


def test_dbar_adjoint(grid16, rng):
    _, B = resolved_basis(grid16, 1)
    f = scalar_field(grid16, (B[:, :6] @ rng.normal(size=6)).reshape(16, 16), 1)
    g = dbar(scalar_field(grid16, (B[:, 6:12] @ rng.normal(size=6)).reshape(16, 16), 1))
    lhs = inner_l2(dbar(f), g)
    rhs = inner_l2(f, dbar_adjoint(g))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_form_types(grid16):
    f = scalar_field(grid16, 1.0, 0)
    assert dbar(f).form_type == "01"
    assert del_(f).form_type == "10"
    assert del_(dbar(f)).form_type == "2"
    with pytest.raises(ShapeError):
        dbar(dbar(f))


def test_background_mismatch(grid16):
    f = scalar_field(grid16, 1.0, 1)
    with pytest.raises(ShapeError):
        dbar(f, BackgroundConnection(2))


def test_evaluate_at_grid_point(grid16, rng):
    _, B = resolved_basis(grid16, 1)
    f = scalar_field(grid16, (B[:, :4] @ rng.normal(size=4)).reshape(16, 16), 1)
    u, v = 3 / 16, 5 / 16
    assert np.isclose(evaluate_at(f, u, v)[0, 0], f.values[3, 5, 0, 0])
