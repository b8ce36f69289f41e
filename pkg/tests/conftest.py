import numpy as np
import pytest

from mixedgms.fine import assemble
from mixedgms.grid import GridHierarchy
from mixedgms.perm import PermField, synthetic_field


def make_system(n, N, kind="synthetic", seed=7, contrast=1e4):
    grid = GridHierarchy(n, N)
    if kind == "uniform":
        kappa = PermField(np.ones((n, n)), "uniform")
    else:
        kappa = synthetic_field(n, seed, contrast)
    return assemble(grid, kappa)


@pytest.fixture(scope="session")
def small_system():
    """16x16 fine grid, 4x4 coarse, high contrast."""
    return make_system(16, 4)


@pytest.fixture(scope="session")
def uniform_system():
    return make_system(8, 2, "uniform")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
