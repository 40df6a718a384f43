import numpy as np
import pytest

from lapbo.curvature import diagonal_fisher
from lapbo.data import gen_dataset, split
from lapbo.nn import ArchSpec, init_network, train_sgd


@pytest.fixture(scope="session")
def moons():
    """Reference two-moons setup: splits, trained [2, 32, 32, 2] MLP and its Fisher."""
    train, val = split(gen_dataset("two_moons", 3000, 0.1, 0), [2000, 1000])
    net = train_sgd(init_network(ArchSpec((2, 32, 32, 2)), 0), train, 200, 0.1, 32, 0)
    return {"train": train, "val": val, "net": net, "curv": diagonal_fisher(net, train)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
