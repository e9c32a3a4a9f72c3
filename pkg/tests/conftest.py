from importlib import resources

import numpy as np
import pytest

from hybridgrid import load_network


@pytest.fixture(scope="session")
def reconstructed_path():
    with resources.as_file(resources.files("hybridgrid") / "data" / "reconstructed_grid.json") as p:
        yield p


@pytest.fixture(scope="session")
def reconstructed(reconstructed_path):
    return load_network(reconstructed_path)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
