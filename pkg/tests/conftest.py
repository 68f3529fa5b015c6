import numpy as np
import pytest

from higgslab.slice_lab import build_critical, default_negative_block, harmonic_h1
from higgslab.torus_geometry import make_grid


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16)


@pytest.fixture(scope="session")
def x11():
    return build_critical((1, -1), n=16)


@pytest.fixture(scope="session")
def h11(x11):
    return harmonic_h1(x11, default_negative_block(x11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    ACCEPTANCE = getattr(mod, "ACCEPTANCE", {})
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
