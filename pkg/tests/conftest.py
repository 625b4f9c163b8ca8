import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "palflow", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("palflow")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
