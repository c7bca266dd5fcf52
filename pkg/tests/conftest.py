import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sketchreg import passio

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _reset_globals():
    yield
    passio.set_threads(None)
    passio.set_block_rows(None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
