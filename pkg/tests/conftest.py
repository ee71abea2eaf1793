import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fss_surrogate.pit import FrequencyGrid, ScreenParams, StackCircuit, UnitCellSpec

# fixed four-screen reference circuit used as a test vector
REFERENCE_SCREENS = [
    (1.8522e-09, 2.9064e-13, 2.4792e-07, 4.2703e-11),
    (1.5292e-09, 3.5589e-13, 2.0562e-07, 4.9911e-11),
    (1.4612e-09, 3.7264e-13, 2.0361e-07, 5.2064e-11),
    (1.7276e-09, 3.4225e-13, 2.1389e-07, 4.8811e-11),
]
REFERENCE_DISTANCES = (10.2788e-3, 8.2938e-3, 9.9791e-3)


@pytest.fixture
def cell():
    return UnitCellSpec()


@pytest.fixture
def grid():
    return FrequencyGrid.uniform()


@pytest.fixture
def reference_stack(cell):
    screens = tuple(ScreenParams(l0, c0, (al,), (ac,)) for l0, c0, al, ac in REFERENCE_SCREENS)
    return StackCircuit(screens, REFERENCE_DISTANCES, cell)


def random_stack(rng, cell, n_screens=None, n_te=1, n_tm=1, strong_modes=False):
    """Random valid stack around the reference-fit magnitudes.

    ``strong_modes`` draws harmonic weights large enough that the modal
    branches carry a visible share of the admittance.
    """
    n = n_screens or int(rng.integers(1, 5))
    screens = []
    for _ in range(n):
        if strong_modes:
            al = rng.uniform(0.05, 1.0, n_te)
            ac = rng.uniform(0.05, 1.0, n_tm)
        else:
            al = 2e-7 * np.exp(rng.uniform(-0.5, 0.5, n_te))
            ac = 4e-11 * np.exp(rng.uniform(-0.5, 0.5, n_tm))
        screens.append(
            ScreenParams(
                1.6e-9 * np.exp(rng.uniform(-0.6, 0.6)),
                3e-13 * np.exp(rng.uniform(-1.0, 0.6)),
                tuple(al),
                tuple(ac),
            )
        )
    return StackCircuit(tuple(screens), tuple(rng.uniform(2e-3, 20e-3, n - 1)), cell)
