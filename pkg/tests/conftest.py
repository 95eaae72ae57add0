import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eulerhopf.geometry import Ball
from eulerhopf.kfield import CriticalPointSpec, KField

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def maximum(y, eta=0.1, beta=3.0, n=4):
    y = np.zeros(n) if y is None else np.asarray(y, dtype=float)
    return CriticalPointSpec(y, beta, -np.ones(n), eta)


def on_axis(*xs, eta=0.1, n=4):
    return [maximum(np.r_[x, np.zeros(n - 1)], eta, n=n) for x in xs]


@pytest.fixture
def ball4():
    return Ball(np.zeros(4), 1.0)


@pytest.fixture
def single_max(ball4):
    return KField.on_domain(ball4, on_axis(0.0))


@pytest.fixture
def two_max_near(ball4):
    return KField.on_domain(ball4, on_axis(-0.2, 0.2))


@pytest.fixture
def two_max_far(ball4):
    return KField.on_domain(ball4, on_axis(-0.7, 0.7, eta=0.05))


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
