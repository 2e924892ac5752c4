"""Shared fixtures: verification pipelines are expensive to build (chart
certification plus the empirical-constant corpus), so each gallery problem
gets one session-scoped pipeline that the module tests reuse."""

import numpy as np
import pytest

from normstab import report
from normstab.model import load_problem

STABLE_PROBLEMS = ("circle2d", "sphere3d", "quasi-line", "allen-cahn-const")


def _build(name):
    p = load_problem(name)
    return report.build_pipeline(p, report.VerifyOptions(seed=0))


@pytest.fixture(scope="session")
def circle_state():
    return _build("circle2d")


@pytest.fixture(scope="session")
def sphere_state():
    return _build("sphere3d")


@pytest.fixture(scope="session")
def quasi_state():
    return _build("quasi-line")


@pytest.fixture(scope="session")
def allen_state():
    return _build("allen-cahn-const")


@pytest.fixture(scope="session")
def stable_states(circle_state, sphere_state, quasi_state, allen_state):
    return {
        "circle2d": circle_state,
        "sphere3d": sphere_state,
        "quasi-line": quasi_state,
        "allen-cahn-const": allen_state,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
