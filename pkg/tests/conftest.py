import numpy as np
import pytest

from riskprof.return_model import MarginalDistribution, Portfolio, ReturnGrid

ACCEPTANCE: dict[int, str] = {}


def random_grid(rng, m, mus=(1.0, 0.5, 5.0, 100.0)):
    m1 = int(rng.integers(-3, 3))
    return ReturnGrid(float(rng.choice(mus)), m1, m1 + m - 1)


def random_marginal(rng, grid, zero_frac=0.2, name=""):
    p = rng.random(grid.m) * (rng.random(grid.m) >= zero_frac)
    if p.sum() == 0:
        p[int(rng.integers(grid.m))] = 1.0
    return MarginalDistribution(grid, p / p.sum(), name=name)


def random_alpha(rng, grid):
    """Mix of on-grid (tie-prone) and continuous targets, some outside the grid."""
    u = rng.random()
    if u < 0.4:
        return float(grid.value(int(rng.integers(grid.m1, grid.m2 + 1))))
    if u < 0.5:
        return float(grid.value(int(rng.integers(grid.m1, grid.m2 + 1)))) + grid.mu / 2
    return float(rng.uniform(grid.lowest - grid.mu, grid.highest + grid.mu))


def random_two_portfolio(rng):
    u = rng.random()
    if u < 0.1:
        return Portfolio.two(float(rng.integers(0, 2)))
    if u < 0.4:
        return Portfolio.two(float(rng.integers(0, 21)) / 20)
    return Portfolio.two(float(rng.random()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def coin():
    grid = ReturnGrid(100.0, 0, 1)
    s = MarginalDistribution(grid, [0.5, 0.5])
    return grid, s, s


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
