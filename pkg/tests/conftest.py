import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from resobs import kernels  # noqa: E402
from resobs.designer import TimeGrid, design  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once, before anything is timed."""
    kernels.warm_up()


class DesignCache:
    """Session-scoped design memoization keyed by (case name, horizon)."""

    def __init__(self):
        self._store = {}

    def artifacts(self, case, T):
        key = (case.name, round(T / case.h))
        if key not in self._store:
            grid = TimeGrid.for_horizon(T, case.h)
            self._store[key] = design(
                case.model, case.topo, case.shapers, grid,
                case.gamma, case.gamma_bar,
            )
        return self._store[key]


@pytest.fixture(scope="session")
def design_cache():
    return DesignCache()
