import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from levykin import (
    Domain,
    RandomStream,
    StableNoiseSpec,
    builtin_drift,
)


@pytest.fixture
def spec15():
    """alpha = 1.5, d = 1: the workhorse noise used across the suite."""
    return StableNoiseSpec(alpha=1.5, dim=1)


@pytest.fixture
def harmonic():
    # U = 1 + x^2/2, Theta = -v
    return builtin_drift("harmonic_damped", k=1.0, gamma=1.0)


@pytest.fixture
def interval_domain():
    return Domain.interval(-1.0, 1.0)


@pytest.fixture
def stream():
    return RandomStream(20260819)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance checks (slow)")
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
