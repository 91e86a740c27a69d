import numpy as np
import pytest

from mjnfet.device import default_paper_device
from mjnfet.mesh import build_mesh


@pytest.fixture(scope="session")
def paper():
    return default_paper_device()


@pytest.fixture(scope="session")
def paper_mesh(paper):
    return build_mesh(paper, "default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
