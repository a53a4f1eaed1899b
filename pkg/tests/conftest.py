import math

import numpy as np
import pytest

import _cases
from gpkp import transonic
from gpkp.spectral_core import Grid2, RealField2

SQRT2 = _cases.SQRT2

# Lines collected by the acceptance tests, echoed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def band_limited(grid: Grid2, rng: np.random.Generator, kmax: int = 3, amp: float = 1.0) -> np.ndarray:
    """Real trigonometric polynomial with modes |m1|, |m2| <= kmax and max |f| = amp."""
    X1, X2 = grid.mesh
    f = np.zeros(grid.shape)
    for m1 in range(kmax + 1):
        for m2 in range(-kmax, kmax + 1):
            a, b = rng.standard_normal(2)
            ph = math.pi * (m1 * X1 / grid.L1 + m2 * X2 / grid.L2)
            f += a * np.cos(ph) + b * np.sin(ph)
    f -= f.mean()
    return amp * f / np.abs(f).max()


def gaussian_bump(grid: Grid2, width1: float, width2: float, x0=(0.0, 0.0)) -> np.ndarray:
    X1, X2 = grid.mesh
    return np.exp(-((X1 - x0[0]) ** 2) / width1**2 - ((X2 - x0[1]) ** 2) / width2**2)


def mirror(a: np.ndarray, axis: int) -> np.ndarray:
    """a(-x) along one axis of a periodic grid centred on index n/2."""
    n = a.shape[axis]
    idx = (-np.arange(n)) % n
    return np.take(a, idx, axis=axis)


@pytest.fixture(scope="session")
def ground_state_256():
    """Lump-seeded Petviashvili state on 256^2, L = 60."""
    return _cases.ground_state(256, 60.0)[0]


@pytest.fixture(scope="session")
def gp_moderate():
    return _cases.gp_moderate()[0]


@pytest.fixture(scope="session")
def gp_large():
    return _cases.gp_large()[0]


@pytest.fixture(scope="session")
def fixed_point_fine():
    return _cases.fixed_point_fine()[0]


@pytest.fixture(scope="session")
def sweep_report():
    return _cases.sweep_report()[0]


@pytest.fixture(scope="session")
def fixed_point_sweep_pairs():
    """Fixed points on 256^2, L = 60 keyed by eps (fields kept for remainder checks)."""
    g = Grid2(256, 256, 60.0, 60.0)
    return {e: transonic.fixed_point_solve(e, g, tol=1e-8).pair for e in (0.3, 0.2, 0.1)}


def random_liftable_pair(grid: Grid2, rng, eps: float) -> transonic.SlowPair:
    N = band_limited(grid, rng, 3, 2.0)
    T = band_limited(grid, rng, 3, 3.0)
    return transonic.SlowPair(RealField2(grid, N), RealField2(grid, T), eps)
