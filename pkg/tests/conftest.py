import numpy as np
import pytest

from balayage import EnergyForm

TWO = [[2.0, 1.0], [1.0, 2.0]]
CLIP = [[2.0, 1.9, 1.0], [1.9, 2.0, 0.5], [1.0, 0.5, 2.0]]
TRI = [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]]


@pytest.fixture
def two():
    return EnergyForm.from_gram(TWO)


@pytest.fixture
def clip():
    return EnergyForm.from_gram(CLIP)


@pytest.fixture
def tri():
    return EnergyForm.from_gram(TRI)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[k])
