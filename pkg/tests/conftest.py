import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fbcap.closedform import BeumcoParams, BumcoParams

settings.register_profile(
    "repro", derandomize=True, deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repro")

SEED = 20240607


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def bumco_ref():
    return BumcoParams(0.9, 0.1, 0.2, 0.4)


@pytest.fixture(scope="session")
def beumco_ref():
    return BeumcoParams(0.95, 0.6, 0.8)


def random_channel_tensor(rng, n, M, nx=2, ny=2, floor=0.02):
    """Random strictly positive kernel [t][w][x][y]."""
    q = rng.dirichlet(np.ones(ny), size=(n + 1, ny**M, nx))
    q = (q + floor) / (1 + ny * floor)
    return q


def random_policy_tensor(rng, n, J, nx=2, ny=2):
    return rng.dirichlet(np.ones(nx), size=(n + 1, ny**J))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
