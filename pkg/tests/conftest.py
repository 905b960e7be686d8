import numpy as np
import pytest

from qsynergy.chip import build_chip_graph
from qsynergy.noise import default_model


@pytest.fixture(scope="session")
def graph():
    return build_chip_graph()


@pytest.fixture(scope="session")
def noise(graph):
    return default_model(graph)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
