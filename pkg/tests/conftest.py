import numpy as np
import pytest

from afspin import datasets
from afspin.grid import Grid


@pytest.fixture(scope="session")
def small_grid():
    return Grid.centered(24, 3.0)


@pytest.fixture(scope="session")
def flat_small(small_grid):
    return datasets.flat(small_grid)


@pytest.fixture(scope="session")
def schwarzschild_small():
    return datasets.schwarzschild_isotropic(Grid.centered(32, 8.0), 1.0)


@pytest.fixture(scope="session")
def bowen_york_small():
    return datasets.bowen_york(Grid.centered(32, 8.0), (0.0, 0.0, 0.5), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {request.node.name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
