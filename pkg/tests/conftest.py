import math

import pytest

from flatcone.recurrence import SolverConfig, clear_memo

PI = math.pi


@pytest.fixture
def coarse():
    """Cheap solver settings for structural tests."""
    return SolverConfig(beta_nodes=64, grid_cells=512)


@pytest.fixture(autouse=False)
def fresh_memo():
    clear_memo()
    yield
    clear_memo()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("reference battery")
        for line in lines:
            terminalreporter.write_line(line)
