import numpy as np
import pytest

from higgslab.errors import ConfigError, DomainError, NotConvergedError
from higgslab.hecke_lab import kernel_map
from higgslab.higgs_core import TangentPair
from higgslab.scattering import (ScatterSchedule, char_invariants, cosine, extreme_negative_eigenvalue,
                                 pair_distance, recover_slice, reverse_trajectory_check, scale_pair,
                                 scatter)


@pytest.fixture(scope="module")
def short_run(x11, h11):
    c = kernel_map(x11, [(0.25, 0.75)], [1.0], h11, width_cells=2)
    c = c / np.linalg.norm(c)
    sched = ScatterSchedule(t_values=[1.0, 2.0, 3.0], min_stages=3, reverse_stride=10)
    return c, scatter(x11, h11.element(c) * 1e-2, sched)


@pytest.mark.parametrize("kw", [{"t_values": []}, {"t_values": [2.0, 1.0]},
                                {"sigma_cauchy_tol": 0.0}, {"max_stage": 0}])
def test_schedule_validation(kw):
    with pytest.raises(ConfigError):
        ScatterSchedule(**kw)


def test_scale_pair(x11, h11):
    y = x11.pair + h11.element(np.ones(h11.dim))
    z = scale_pair(y, 0.5)
    assert np.allclose(z.alpha[..., 0, 1], y.alpha[..., 0, 1] * np.exp(-1.0))
    assert np.allclose(z.Phi, y.Phi)


def test_rejects_non_negative_deformation(x11):
    b = x11.bundle
    da = b.zeros()
    da[..., 1, 0] = 0.01
    with pytest.raises(DomainError):
        scatter(x11, TangentPair(b, da, b.zeros()))


def test_stages_converge(short_run):
    _, res = short_run
    assert res.converged
    assert all(np.isfinite(res.sigma_stages))
    assert res.sigma_stages[-1] < 1e-8
    assert res.cauchy_sigma[1] < res.cauchy_sigma[0]
    assert res.stages[-1].min_distance > 0


def test_reverse_samples(x11, short_run):
    _, res = short_run
    rep = reverse_trajectory_check(x11, res)
    assert rep.monotone and rep.invariant_ok and rep.energy_ok
    assert extreme_negative_eigenvalue(x11) == -2.0


def test_round_trip(x11, h11, short_run):
    c, res = short_run
    _, coords = recover_slice(x11, res, h11, depth_rtol=1e-2)
    assert cosine(coords, c) > 0.99


def test_recover_needs_depth(x11, h11, short_run):
    from higgslab.errors import NeedsDeeperSamples
    _, res = short_run
    with pytest.raises(NeedsDeeperSamples):
        recover_slice(x11, res, h11, depth_tol=1e-12, depth_rtol=1e-6)


def test_reverse_needs_convergence(x11, short_run):
    _, res = short_run
    bad = type(res)(**{**res.__dict__, "converged": False})
    with pytest.raises(NotConvergedError):
        reverse_trajectory_check(x11, bad)


def test_char_invariants_of_split(x11):
    tr, det = char_invariants(x11.pair)
    assert np.allclose(tr, 0) and np.allclose(det, 0)
    assert pair_distance(x11.pair, x11.pair) == 0.0
