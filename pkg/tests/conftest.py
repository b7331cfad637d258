import numpy as np
import pytest

from toral_rigidity.algebra import IntMatrix
from toral_rigidity.dynamics import Profile, TorusMap, make_conjugated

CAT = IntMatrix(((2, 1), (1, 1)))
QUARTIC = IntMatrix(((1, -1, 1, 0), (1, 1, 0, 1), (0, -1, 1, 0), (1, 0, 0, 1)))
LOG_GOLDEN_SQ = float(np.log((3 + np.sqrt(5)) / 2))


@pytest.fixture(scope="session")
def cat():
    return CAT


@pytest.fixture(scope="session")
def quartic():
    return QUARTIC


@pytest.fixture(scope="session")
def psi():
    return TorusMap.shear((1, 0), (0, 1), Profile.sine(0.02))


@pytest.fixture(scope="session")
def conjugated(psi):
    return make_conjugated(CAT, psi)


@pytest.fixture(scope="session")
def sheared():
    return TorusMap.linear(CAT).then(TorusMap.shear((1, 0), (0, 1), Profile.sine(0.05)))


@pytest.fixture(scope="session")
def psi4():
    return TorusMap.shear((1, 0, 0, 0), (0, 1, 0, 0), Profile.sine(0.02))


@pytest.fixture(scope="session")
def conjugated4(psi4):
    return make_conjugated(QUARTIC, psi4)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
