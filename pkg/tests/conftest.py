import numpy as np
import pytest

from qedlab import AtomParams, DriveField
from qedlab.units import mhz_to_angular


def mhz(x):
    return mhz_to_angular(x)


@pytest.fixture
def atom():
    return AtomParams.measured()


@pytest.fixture
def lossless(atom):
    return atom.with_rates(gamma1=0.0, gamma2=0.0)


@pytest.fixture
def drive140():
    return DriveField.from_mhz(140.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
