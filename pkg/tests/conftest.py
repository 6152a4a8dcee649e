import numpy as np
import pytest

from sausagelab import space as S

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def path21():
    return S.path_graph(21)


@pytest.fixture(scope="session")
def small_random():
    return S.random_connected(20, np.random.default_rng(7), extra=0.15, measure="random")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
