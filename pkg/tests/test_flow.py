import numpy as np
import pytest

from higgslab.errors import ConfigError, ShapeError
from higgslab.flow_engine import (FlowOptions, flow, flow_to_limit, is_nonincreasing, linearized_flow,
                                  modified_flow, polish_critical, stability_dt,
                                  track_relative_metric)
from higgslab.higgs_core import (HiggsPair, SplitBundle, grad_norm, random_pair, random_tangent,
                                 ymh_energy)


@pytest.mark.parametrize("kw", [{"dt": -1.0}, {"t_max": 0.0}, {"record_every": 0},
                                {"depart_factor": 0.5}])
def test_options_validation(kw):
    with pytest.raises(ConfigError):
        FlowOptions(**kw)


def test_stability_step_accounts_for_twist(grid16):
    a = stability_dt(SplitBundle.make(grid16, [0, 0]))
    b = stability_dt(SplitBundle.make(grid16, [-2, 2]))
    assert b < a


def test_energy_decreases(grid16, rng):
    y = random_pair(SplitBundle.make(grid16, [-1, 1]), rng, 0.3)
    tr = flow(y, FlowOptions(t_max=0.5, record_every=5))
    assert is_nonincreasing(tr.energies, 1e-10)
    assert tr.energies[-1] < tr.energies[0]
    assert tr.grad_norms[-1] < tr.grad_norms[0]
    assert len(list(tr.rows())[0]) == 3 + 2 + 2


def test_critical_point_is_fixed(x11):
    tr = flow(x11.pair, FlowOptions(t_max=0.1))
    assert tr.converged
    assert np.isclose(tr.energies[-1], 4 * np.pi)


def test_linearized_flow_scales_negative_block(x11, h11):
    d = h11.element(np.ones(h11.dim))
    out = linearized_flow(x11, d, 0.5)
    assert np.allclose(out.da[..., 0, 1], d.da[..., 0, 1] * np.exp(-1.0))


def test_modified_flow_decreases_energy(x11, rng):
    y0 = x11.pair + random_tangent(x11.bundle, rng, 0.05)
    tr = modified_flow(x11, y0, FlowOptions(t_max=0.3, record_every=5))
    assert tr.energies[-1] <= tr.energies[0] + 1e-10
    with pytest.raises(ShapeError):
        modified_flow(x11, random_pair(SplitBundle.make(x11.grid, [0, 0]), rng), FlowOptions(t_max=0.1))


def test_polish_returns_to_critical_point(x11, rng):
    y = x11.pair + random_tangent(x11.bundle, rng, 1e-3)
    out, rep = polish_critical(y, tol=1e-9)
    assert rep.converged
    assert grad_norm(out) < 1e-9
    assert np.isclose(ymh_energy(out), 4 * np.pi, rtol=1e-8)


def test_flow_to_limit_semistable(x11, h11):
    y0 = x11.pair + h11.element(np.array([1.0, 0.5])) * 0.05
    limit, tr, rep = flow_to_limit(y0, FlowOptions(t_max=30.0, grad_tol=1e-8, depart_factor=3.0))
    assert grad_norm(limit) < 1e-8
    assert ymh_energy(limit) < 1e-6


def test_relative_metric_requires_gauges(grid16, rng):
    y = random_pair(SplitBundle.make(grid16, [-1, 1]), rng, 0.3)
    tr = flow(y, FlowOptions(t_max=0.05))
    with pytest.raises(ShapeError):
        track_relative_metric(tr, tr, y.bundle.identity())
