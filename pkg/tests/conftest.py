import math

import numpy as np
import pytest

from brwrate import (DiscreteTable, IidScaledUniform, LogNormalWeights, PoissonGW)

SIGMA2 = 2 * math.log(2) / 2.25


@pytest.fixture
def uniform():
    return IidScaledUniform(2)


@pytest.fixture
def lognormal():
    return LogNormalWeights(2, SIGMA2)


@pytest.fixture
def poisson():
    return PoissonGW(2.0)


@pytest.fixture
def two_point():
    return DiscreteTable([(0.5, [0.75, 0.75]), (0.5, [0.5])])


@pytest.fixture
def degenerate():
    return DiscreteTable([(1.0, [0.5, 0.5])])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_laws():
    return {
        "uniform": IidScaledUniform(2),
        "lognormal": LogNormalWeights(2, SIGMA2),
        "poisson": PoissonGW(2.0),
        "two_point": DiscreteTable([(0.5, [0.75, 0.75]), (0.5, [0.5])]),
    }


ACCEPTANCE = []


def record(label, passed, detail):
    """Keep one acceptance line for the terminal summary and echo it."""
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
