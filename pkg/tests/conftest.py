"""Shared fixtures for the test suite."""
import numpy as np
import pytest

from titepk.pk import DosingRegimen, PKParams, reference_scale

# Acceptance-gate lines registered by tests/test_acceptance.py; replayed in a
# terminal section after the run so they are visible even for passing tests
# (pytest's fd-level capture swallows in-test writes to the real stdout).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pk():
    return PKParams()


@pytest.fixture(scope="session")
def daily_ref(pk):
    """Reference normalization used by the bundled analyses: 5 mg/m^2 daily."""
    return reference_scale(DosingRegimen(5.0, 24.0), pk)


@pytest.fixture(scope="session")
def sim_ref(pk):
    """Reference normalization used by the simulation study: 7.5 mg/m^2 daily."""
    return reference_scale(DosingRegimen(7.5, 24.0), pk)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)
