import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crossdiff.grid import Grid
from crossdiff.model import ParamSet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def canonical():
    """Canonical SKT parameters: everything 1 except r_u = r_v = 2."""
    return ParamSet()


@pytest.fixture
def grid1d():
    return Grid(1, 32)


@pytest.fixture
def grid2d():
    return Grid(2, (12, 9), (1.0, 1.5))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from tests_acceptance_registry import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        ok, title, detail = RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
