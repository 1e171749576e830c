import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from axang.controllers import benchmark_controllers  # noqa: E402
from axang.dynamics import InertiaParams  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (verdict, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def inertia():
    return InertiaParams.crazyflie()


@pytest.fixture(scope="session")
def controllers(inertia):
    return benchmark_controllers(inertia)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 10):
        verdict, detail = ACCEPTANCE.get(k, ("NOT RUN", ""))
        terminalreporter.write_line(f"criterion {k}: {verdict}  {detail}")
