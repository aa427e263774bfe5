import pytest

from balanced.solver import SolverConfig, solve_balanced

import _acceptance_log


@pytest.fixture(scope="session")
def solved_zero():
    return solve_balanced(0.0, SolverConfig(truncation_order=80, tol=1e-8))


@pytest.fixture(scope="session")
def solved_half():
    return solve_balanced(0.5, SolverConfig(truncation_order=80, tol=1e-8))


@pytest.fixture(scope="session")
def solved_half_large():
    return solve_balanced(0.5, SolverConfig(truncation_order=200, tol=1e-8))


def pytest_terminal_summary(terminalreporter):
    lines = _acceptance_log.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
