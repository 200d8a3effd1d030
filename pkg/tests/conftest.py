import numpy as np
import pytest
from hypothesis import settings

from cqcompare.types import SampleData

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sample(rng, n, p=2, ties=False):
    """Linear model with normal errors and roughly 30% normal censoring."""
    z = np.column_stack([np.ones(n), rng.random((n, p))])
    y = z[:, 1:] @ np.linspace(-0.5, 0.5, p) + 0.5 * rng.normal(size=n)
    c = rng.normal(0.6, 1.0, size=n)
    d = (y <= c).astype(int)
    x = np.minimum(y, c)
    if ties:
        x = np.round(x, 1)
    d[np.argmin(x)] = 1
    return SampleData(x, d, z)


@pytest.fixture(scope="session")
def median_study():
    """Setting 2, Model 1, n1 = n2 = 200, 20% censoring, R = 500 warp-speed run."""
    from cqcompare.simulate import ScenarioGrid, diff_family, warp_speed_study

    grid = ScenarioGrid(diff_family(1, 2, diffs=(0.0, 0.2, 0.4)), replications=500)
    return warp_speed_study(grid, 12345, keep_statistics=True)
