import numpy as np
import pytest

from esdg.euler import cons_from_prim


def random_states(rng, dim, n, spread=1.0):
    """Admissible conservative states with density/pressure ratios up to 10^spread."""
    rho = 10.0 ** rng.uniform(-spread / 2, spread / 2, n)
    p = 10.0 ** rng.uniform(-spread / 2, spread / 2, n)
    vel = rng.uniform(-1.0, 1.0, (dim, n))
    return cons_from_prim(rho, vel, p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def data_dir():
    from pathlib import Path

    return Path(__file__).parent / "data"


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
