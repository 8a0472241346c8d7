"""Shared fixtures: reference grid and the three tuned potentials.

The couplings are frozen at the tuner outputs for the reference grid
(nodes_per_dim = 6); test_spectral re-derives them from scratch so the
frozen values stay honest.
"""

import numpy as np
import pytest

from reslab import operator, spectral

FIRST_G = 20.055030673119578
SECOND_G = 359.86692657358975
THIRD_G = 1187.5742660778776
THIRD_H = 70.24436577130005


@pytest.fixture(scope="session")
def grid():
    return operator.build_grid(halfwidth=1.0, nodes_per_dim=6)


@pytest.fixture(scope="session")
def pot_first(grid):
    return operator.bump_potential(FIRST_G, grid)


@pytest.fixture(scope="session")
def pot_second(grid):
    return operator.twin_bumps_potential(SECOND_G, grid)


@pytest.fixture(scope="session")
def pot_third(grid):
    return operator.pair_plus_bump_potential(THIRD_G, THIRD_H, grid)


@pytest.fixture(scope="session")
def spec_first(pot_first, grid):
    spec = spectral.classify(pot_first, grid)
    assert spec.classification == spectral.FIRST_KIND
    return spec


@pytest.fixture(scope="session")
def spec_second(pot_second, grid):
    spec = spectral.classify(pot_second, grid)
    assert spec.classification == spectral.SECOND_KIND
    return spec


@pytest.fixture(scope="session")
def spec_third(pot_third, grid):
    spec = spectral.classify(pot_third, grid)
    assert spec.classification == spectral.THIRD_KIND
    return spec


@pytest.fixture(scope="session")
def spec_regular(grid):
    pot = operator.bump_potential(0.01, grid)
    spec = spectral.classify(pot, grid)
    assert spec.classification == spectral.REGULAR
    return spec


# ---------------------------------------------------------------------------
# acceptance-criteria reporting: each criterion test registers one line
# here and the terminal summary prints them even under output capture

ACCEPTANCE_RESULTS = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"CRITERION {number}: {verdict} - {detail}")
