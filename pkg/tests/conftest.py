import numpy as np
import pytest

from vortexlab.fields import Grid2D, ScalarField


@pytest.fixture(scope="session")
def grid128():
    return Grid2D(128, 12.0)


@pytest.fixture(scope="session")
def grid256():
    return Grid2D(256, 12.0)


@pytest.fixture(scope="session")
def grid64():
    return Grid2D(64, 8.0)


def smooth_random_field(grid, seed, corr=1.5, envelope=1.5, mean_zero=False):
    """Band-limited random field with a Gaussian spatial envelope."""
    rng = np.random.Generator(np.random.Philox(seed))
    spec = rng.standard_normal((grid.n, grid.n // 2 + 1)) \
        + 1j * rng.standard_normal((grid.n, grid.n // 2 + 1))
    spec *= np.exp(-grid.k2 * corr ** 2 / 2.0)
    spec[0, 0] = 0.0
    vals = np.fft.irfft2(spec, (grid.n, grid.n))
    vals *= np.exp(-grid.r2 / (2.0 * envelope ** 2))
    vals /= np.max(np.abs(vals))
    if mean_zero:
        # subtract a decaying unit-mass bump, not a constant, to keep decay
        total = grid.cell_area * np.sum(vals)
        vals -= total * np.exp(-grid.r2 / 4.0) / (4.0 * np.pi)
    return ScalarField(grid, vals)


@pytest.fixture()
def random_field(grid128):
    return smooth_random_field(grid128, seed=42)
