import numpy as np
import pytest

from spin.graph import erdos_renyi
from spin.nn import make_rng


def random_graph(rng, n_max=8, p=None, d=1):
    n = int(rng.integers(1, n_max + 1))
    g = erdos_renyi(n, rng.uniform(0.1, 0.9) if p is None else p, rng)
    if d > 1:
        g = g.with_features(rng.normal(size=(n, d)))
    return g


@pytest.fixture
def rng():
    return make_rng(1234)


def pytest_configure(config):
    np.set_printoptions(precision=6, suppress=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
