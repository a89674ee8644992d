import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from markovsd import MonteCarlo, build_fsmc, lloyd_max

_ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    line = f"[{name}] {'PASS' if passed else 'FAIL'}: {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example_model():
    """36-state quantized fading channel at 3 dB, fast fading."""
    return build_fsmc(0.95, lloyd_max(6, 0.5, tol=1e-12), 3.0)


@pytest.fixture(scope="session")
def small_model():
    """4-state channel: cheap but with real memory."""
    return build_fsmc(0.8, lloyd_max(2, 0.5, tol=1e-12), 3.0)


@pytest.fixture(scope="session")
def positive_small_model():
    """Strictly positive 4-state channel for contraction bounds."""
    return build_fsmc(0.7, lloyd_max(2, 0.5, tol=1e-12), 3.0)


def single_state_model(noise_n0, gain=1.0 + 0.0j):
    from markovsd.fsmc import StateModel

    return StateModel(np.array([gain]), np.array([[1.0]]), np.array([1.0]),
                      noise_n0=noise_n0)


@pytest.fixture(scope="session")
def quick_mc():
    return MonteCarlo(block_len=2000, blocks=10, seed=1234)
