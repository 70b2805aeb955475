from pathlib import Path

import numpy as np
import pytest

from selfpaced.experiments import ExperimentConfig, build_problem

ROOT = Path(__file__).resolve().parents[1]
STANDARD_CONFIG = ROOT / "configs" / "standard.yaml"

ACCEPTANCE_LINES = []


def central_diff(fun, x, h):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.fixture(scope="session")
def standard_config():
    return ExperimentConfig.load(STANDARD_CONFIG)


@pytest.fixture(scope="session")
def standard(standard_config):
    """(problem, w0, truth) for the standard certification instance."""
    return build_problem(standard_config)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
