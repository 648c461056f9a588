import numpy as np
import pytest

from periodic_effort import measure, profiles


def random_profile(problem, grid, rng, floor=0.05):
    """Random strictly increasing profile with mass ``T * eta_bar`` (atoms on split gaps)."""
    inc = rng.exponential(size=grid.n_gaps) + floor
    alpha = np.concatenate([[0.0], np.cumsum(inc)])
    alpha *= problem.mass / alpha[-1]
    alpha[-1] = problem.mass
    return measure.EffortProfile(grid, alpha)


def smooth_profile(problem, grid):
    """Fixed smooth positive density, rescaled to the problem's mass."""
    dens = 2.0 + 1.5 * np.sin(2.0 * np.pi * grid.t / grid.period) ** 2
    return measure.from_density(grid, dens).rescaled(problem.mass)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def constant_problem():
    one = profiles.PeriodicPiecewise.constant(1.0, 1.0)
    two = profiles.PeriodicPiecewise.constant(2.0, 1.0)
    return profiles.ProblemData(c=two, w=one, delta=0.5, period=1.0, eta_bar=1.5)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
