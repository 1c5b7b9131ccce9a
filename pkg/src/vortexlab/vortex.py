"""Closed-form Gaussian vortex family and the symmetry-frozen eigenfunctions.

The vorticity profile G and its azimuthal velocity v^G are the equilibrium of
the rescaled dynamics; G, the two dipoles F_j = -d_j G, and the second-order
derivatives of G are the eigenfunctions pinned by mass, translation and
scaling symmetry.  Everything here is evaluated analytically (no differencing)
so these fields can serve as exact references in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (FieldError, Grid2D, ScalarField, VectorField,
                     delta_g_values, dipole_values, gaussian_values)


@dataclass(frozen=True)
class VortexParams:
    """Circulation Reynolds number of the vortex family."""

    alpha: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise FieldError("alpha must be finite")


def azimuthal_profile(r2: np.ndarray) -> np.ndarray:
    """phi(r) = (1 - exp(-r^2/4)) / (2 pi r^2), the v^G amplitude over r.

    The removable singularity at r = 0 is filled with the series limit
    1/(8 pi); the switch happens well before cancellation can bite.
    """
    r2 = np.asarray(r2, dtype=float)
    safe = np.where(r2 == 0.0, 1.0, r2)
    main = -np.expm1(-r2 / 4.0) / (2.0 * np.pi * safe)
    series = (1.0 - r2 / 8.0 + r2 ** 2 / 96.0) / (8.0 * np.pi)
    return np.where(r2 > 1e-8, main, series)


def azimuthal_profile_slope(r2: np.ndarray) -> np.ndarray:
    """phi'(r)/r, needed for the closed-form dipole velocities."""
    r2 = np.asarray(r2, dtype=float)
    E = np.exp(-r2 / 4.0)
    r4 = r2 * r2
    safe = np.where(r4 == 0.0, 1.0, r4)
    main = (r2 * E + 4.0 * np.expm1(-r2 / 4.0)) / (4.0 * np.pi * safe)
    series = -1.0 / (32.0 * np.pi) + r2 / (192.0 * np.pi) - r4 / (1536.0 * np.pi)
    return np.where(r2 > 1e-3, main, series)


def gaussian_G(grid: Grid2D) -> ScalarField:
    """The unit-circulation Gaussian vortex profile."""
    return ScalarField(grid, gaussian_values(grid), frame="scaled", time=0.0)


def oseen_velocity_vG(grid: Grid2D) -> VectorField:
    """Closed-form velocity of G: v^G = xi^perp phi(|xi|)."""
    phi = azimuthal_profile(grid.r2)
    return VectorField(grid, -grid.y * phi, grid.x * phi)


def dipole_velocity(grid: Grid2D, j: int) -> VectorField:
    """Closed-form velocity of the dipole F_j = -d_j G.

    Obtained by differentiating v^G, so the pair (F_j, dipole_velocity(j))
    satisfies the Biot-Savart relation exactly.
    """
    phi = azimuthal_profile(grid.r2)
    slope = azimuthal_profile_slope(grid.r2)
    x, y = grid.x, grid.y
    if j == 1:
        return VectorField(grid, x * y * slope, -phi - x * x * slope)
    if j == 2:
        return VectorField(grid, phi + y * y * slope, -x * y * slope)
    raise FieldError(f"dipole index must be 1 or 2, got {j}")


def frozen_eigenfunctions(grid: Grid2D) -> list[ScalarField]:
    """The six analytically known eigenfunctions, in spectral order.

    Returns [G, F1, F2, Lap(G), (d11 - d22)G, d12 G]; eigenvalues under the
    linearised generator are 0, -1/2, -1/2, -1, -1, -1 for every circulation.
    """
    G = gaussian_values(grid)
    x, y = grid.x, grid.y
    fields = [
        G,
        dipole_values(grid, 1),
        dipole_values(grid, 2),
        delta_g_values(grid),
        0.25 * (x * x - y * y) * G,          # (d11 - d22) G
        0.25 * x * y * G,                    # d12 G
    ]
    return [ScalarField(grid, f) for f in fields]


def oseen_unscaled(grid: Grid2D, t: float, params: VortexParams) -> tuple[ScalarField, VectorField]:
    """Physical-frame vortex at time t: omega = (alpha/t) G(x/sqrt t) etc."""
    if not (t > 0):
        raise FieldError(f"oseen_unscaled needs t > 0, got {t}")
    s = np.sqrt(t)
    r2s = grid.r2 / t
    omega = params.alpha / (4.0 * np.pi * t) * np.exp(-r2s / 4.0)
    phi = azimuthal_profile(r2s)
    u = VectorField(grid, params.alpha / t * (-grid.y) * phi,
                    params.alpha / t * grid.x * phi)
    # alpha/sqrt(t) * vG(x/sqrt t) = alpha/t * x^perp phi(|x|^2/t)
    return ScalarField(grid, omega, frame="unscaled", time=float(t)), u
