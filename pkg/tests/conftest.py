"""Session-wide Monte Carlo runs shared by the acceptance and property tests."""

import pytest

from tailgarch.montecarlo import load_spec, run_experiment

_RUNS = {}
ACCEPTANCE_LINES = []


def bundled_run(name):
    """Run a bundled experiment once per session."""
    if name not in _RUNS:
        _RUNS[name] = run_experiment(load_spec(name))
    return _RUNS[name]


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one ``[PASS]``/``[FAIL]`` line per acceptance criterion."""
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def gaussian_n800():
    return bundled_run("table1_gaussian_n800_r1000")


@pytest.fixture(scope="session")
def pareto_n100():
    return bundled_run("table1_pareto25_n100_r1000")


@pytest.fixture(scope="session")
def pareto_n800():
    return bundled_run("table1_pareto25_n800_r1000")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
