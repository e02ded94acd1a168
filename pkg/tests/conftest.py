import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tetopt.generate import structured_cube

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance results, printed in the terminal summary
ACCEPTANCE = []


def record_acceptance(number, ok, detail):
    ACCEPTANCE.append((number, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def cube3():
    return structured_cube(3, perturb=0.25, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


REGULAR = np.array([
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
])

CORNER = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]])
