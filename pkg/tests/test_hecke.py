import numpy as np
import pytest

from higgslab.errors import ConfigError, DomainError, InconclusiveResult, UnsupportedError
from higgslab.hecke_lab import (ExperimentConfig, LineBundleSpec, abel_jacobi, dual,
                                flowline_experiment, generic_secant_level, gram_condition,
                                group_inverse, hecke_compatible, identify_flat_line, kernel_images,
                                kernel_map, mn_stable, modify_line_bundle, point_distance,
                                point_from_aj,
                                predicted_type, secant_member, spectral_locus, summand_spec, tensor)
from higgslab.slice_lab import build_critical, default_negative_block, harmonic_h1


def test_predicted_types():
    assert predicted_type((2, -2), 1) == (-1, 1)
    assert predicted_type((1, -1), 1) == (0, 0)
    assert predicted_type((3, -1), 1) == (0, 2)
    assert predicted_type((3, -1), 2) == (1, 1)
    assert predicted_type((3, -1), 5) == (1, 1)
    assert [generic_secant_level(d) for d in (1, 2, 3, 4)] == [1, 1, 2, 2]


def test_line_bundle_algebra():
    L = LineBundleSpec(2, (0.1, 0.2))
    M = modify_line_bundle(L, [(0.25, 0.75)])
    assert M.degree == 1
    triv = tensor(L, dual(L))
    assert triv.degree == 0
    assert point_distance(triv.holonomy, (0.0, 0.0)) < 1e-12
    q = (0.3, 0.6)
    assert np.allclose(point_from_aj(abel_jacobi(q)), q)
    assert np.allclose(group_inverse(group_inverse(q)), q)
    with pytest.raises(UnsupportedError):
        modify_line_bundle(L, [(0.2, 0.2), (0.2, 0.2)])


def test_kernel_images_full_rank(x11, h11):
    K = kernel_images(x11, [(0.25, 0.75), (0.6, 0.1)], h11, width_cells=2)
    assert np.linalg.matrix_rank(K) == 2
    assert gram_condition(K) < 1e6


def test_secant_membership(x11, h11):
    p = [(0.25, 0.75)]
    c = kernel_map(x11, p, [1.0], h11, width_cells=2)
    assert secant_member(c, p, x11, h11, width_cells=2)
    assert not secant_member(c, [(0.6, 0.1)], x11, h11, width_cells=2)
    with pytest.raises(DomainError):
        secant_member(np.zeros(h11.dim), p, x11, h11)


def test_identify_split_summand(x11):
    top = summand_spec(x11, 1)
    assert identify_flat_line(x11.pair, "positive", top) == 1
    shifted = LineBundleSpec(top.degree, (top.holonomy[0] + 0.37, top.holonomy[1] + 0.21))
    assert identify_flat_line(x11.pair, "positive", shifted) == 0


def test_hecke_compatibility():
    x = build_critical((1, -1), higgs_consts=(0.5, -0.5), n=16)
    mu = hecke_compatible(x.pair, (0.3, 0.3), [1.0, 0.0])
    assert mu is not None and np.isclose(abs(mu), 0.5)
    assert hecke_compatible(x.pair, (0.3, 0.3), [1.0, 1.0]) is None
    loc = spectral_locus(x.pair, [(0.1, 0.2)])
    assert not loc[0]["degenerate"]


def test_mn_stability_needs_candidates():
    with pytest.raises(InconclusiveResult):
        mn_stable((1, -1), [], 0, 0)
    rep = mn_stable((1, -1), [{"degree": -1, "rank": 1}], 0, 0)
    assert rep.stable


@pytest.mark.parametrize("kw", [{"class_rule": "bogus"}, {"points": ()}, {"eps": -1.0},
                                {"degrees": (1, 0, -1)}])
def test_experiment_config_validation(kw):
    base = {"degrees": (1, -1), "points": ((0.25, 0.75),), "n": 16}
    base.update(kw)
    with pytest.raises(ConfigError):
        ExperimentConfig(**base)


def test_stationary_verdict():
    v = flowline_experiment(ExperimentConfig(degrees=(1, -1), points=((0.25, 0.75),), n=16, eps=0.0))
    assert v.passed and v.level == 0
    assert v.summary()["measured"] == [-1, 1]


@pytest.mark.parametrize("degs,pts", [((1, -1), [(0.25, 0.75), (0.6, 0.1)]),
                                      ((3, -1), [(0.25, 0.75), (0.6, 0.1), (0.1, 0.4)])])
def test_exact_sequence_rank(degs, pts):
    x = build_critical(degs, n=16)
    H = harmonic_h1(x, default_negative_block(x))
    K = kernel_images(x, pts, H, width_cells=2)
    assert np.linalg.matrix_rank(K) == len(pts)
