import sys

import numpy as np
import pytest

from aetlab.mesh import generate_disk_mesh
from aetlab.pipeline import Setup


@pytest.fixture(scope="session")
def disk500():
    return generate_disk_mesh(1.0, 500)


@pytest.fixture(scope="session")
def tiny():
    """A setup small enough for whole-pipeline unit tests."""
    return Setup.desk(target_nodes=400, grid_n=96, n_sources=8, n_records=60)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
