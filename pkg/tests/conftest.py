import math
from pathlib import Path

import numpy as np
import pytest

from qwdecay.config import load_config
from qwdecay.walk import CoinSpec, validate_shift_params

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

PHI = np.full(4, 0.5, dtype=np.complex128)
OMEGA = np.sqrt([0.7, 0.1, 0.1, 0.1]).astype(np.complex128)

_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def canonical_coins():
    return CoinSpec(PHI, OMEGA)


@pytest.fixture(scope="session")
def canonical_config():
    return load_config(CONFIGS / "canonical.yaml")


def scan_params(q1: float):
    return validate_shift_params([math.sqrt(1 - q1 * q1), 1.0], [q1, 0.0])
