import numpy as np
import pytest

from kselearn.spectral import Grid


@pytest.fixture(scope="session")
def grid():
    return Grid()


@pytest.fixture(scope="session")
def small_grid():
    return Grid(L=2.0, N=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def warmup_cache(tmp_path_factory):
    """Shared on-disk truth cache for the long twin experiments."""
    return str(tmp_path_factory.mktemp("warmup-cache"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
