"""Velocity reconstruction from vorticity.

Two routes: a fast spectral path for production use, and a literal
quadrature of the singular convolution kernel as a slow oracle.

A field with nonzero total vorticity has non-decaying circulation and cannot
be periodised, so the spectral path first splits off the Gaussian-vortex part
alpha*G and handles its velocity in closed form.  The dipole content
beta_j*F_j is split off analytically as well: the periodic solve of a field
with dipole moment p differs from the free-space one by a uniform velocity
p^perp / (2 (2L)^2) coming from the image lattice, which is large enough to
break momentum conservation and the frozen-eigenfunction identities if left
in.  The fully moment-free remainder is inverted by the Fourier multiplier
i k^perp / |k|^2 with the k = 0 mode set to zero.
"""

from __future__ import annotations

import warnings

import numpy as np

from .fields import (FieldError, Grid2D, ScalarField, TruncationWarning,
                     VectorField, boundary_magnitude, dipole_values,
                     gaussian_values)
from .vortex import azimuthal_profile, azimuthal_profile_slope

ORACLE_CAP = 64

_ANALYTIC_CACHE: dict[tuple, tuple] = {}


def _analytic_parts(grid: Grid2D):
    """Cached samples of G, F_j and their closed-form velocities."""
    key = (grid.n, grid.half_width)
    hit = _ANALYTIC_CACHE.get(key)
    if hit is None:
        phi = azimuthal_profile(grid.r2)
        slope = azimuthal_profile_slope(grid.r2)
        x, y = grid.x, grid.y
        G = gaussian_values(grid)
        F1 = dipole_values(grid, 1)
        F2 = dipole_values(grid, 2)
        vG = (-y * phi, x * phi)
        vF1 = (x * y * slope, -phi - x * x * slope)
        vF2 = (phi + y * y * slope, -x * y * slope)
        hit = (G, F1, F2, vG, vF1, vF2)
        if len(_ANALYTIC_CACHE) > 8:
            _ANALYTIC_CACHE.clear()
        _ANALYTIC_CACHE[key] = hit
    return hit


def velocity_core(grid: Grid2D, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral Biot-Savart on raw sample arrays (solver inner loop)."""
    G, F1, F2, vG, vF1, vF2 = _analytic_parts(grid)
    h2 = grid.cell_area
    a = h2 * np.sum(w)
    b1 = h2 * np.sum(grid.x * w)
    b2 = h2 * np.sum(grid.y * w)
    R = w - a * G - b1 * F1 - b2 * F2
    rh = np.fft.rfft2(R)
    v1 = np.fft.irfft2(1j * grid.ky * rh * grid.inv_k2, w.shape)
    v2 = np.fft.irfft2(-1j * grid.kx * rh * grid.inv_k2, w.shape)
    v1 += a * vG[0] + b1 * vF1[0] + b2 * vF2[0]
    v2 += a * vG[1] + b1 * vF1[1] + b2 * vF2[1]
    return v1, v2


def velocity_spectral(w: ScalarField) -> VectorField:
    """Velocity of a scaled-frame vorticity field, spectral path.

    Records a truncation warning in the result metadata when the field has
    not decayed at the box boundary (the periodisation is then material).
    """
    if w.frame != "scaled":
        raise FieldError("velocity_spectral expects a scaled-frame field")
    meta = ()
    # the image-lattice velocity error scales with the boundary magnitude;
    # below 1e-5 of peak it sits under the module's own tolerance class
    bmag = boundary_magnitude(w)
    if bmag > 1e-5:
        msg = f"vorticity boundary magnitude {bmag:.2e} of peak; periodisation error is material"
        warnings.warn(msg, TruncationWarning, stacklevel=2)
        meta = (msg,)
    v1, v2 = velocity_core(w.grid, w.values)
    return VectorField(w.grid, v1, v2, meta=meta)


def velocity_direct(w: ScalarField, cap: int = ORACLE_CAP) -> VectorField:
    """Brute-force quadrature of the free-space Biot-Savart integral.

    O(n^4); the singular diagonal cell is excluded (principal value).  Serves
    as the independent oracle for `velocity_spectral` on small grids.
    """
    g = w.grid
    if g.n > cap:
        raise FieldError(f"velocity_direct capped at n <= {cap} (O(n^4) cost), got n={g.n}")
    n = g.n
    px = np.repeat(g.axis, n)
    py = np.tile(g.axis, n)
    wf = w.values.ravel() * g.cell_area / (2.0 * np.pi)
    v = np.zeros((2, n * n))
    # row-chunked pairwise kernel; memory stays O(chunk * n^2)
    chunk = max(1, (1 << 22) // (n * n))
    for lo in range(0, n * n, chunk):
        hi = min(lo + chunk, n * n)
        dx = px[lo:hi, None] - px[None, :]
        dy = py[lo:hi, None] - py[None, :]
        r2 = dx * dx + dy * dy
        np.place(r2, r2 == 0.0, 1.0)
        inv = 1.0 / r2
        idx = np.arange(lo, hi)
        inv[idx - lo, idx] = 0.0
        v[0, lo:hi] = (-dy * inv) @ wf
        v[1, lo:hi] = (dx * inv) @ wf
    return VectorField(g, v[0].reshape(n, n), v[1].reshape(n, n))


def weighted_virial(w: ScalarField, v: VectorField) -> float:
    """int (xi . v) w dxi; vanishes when v is the Biot-Savart velocity of w."""
    g = w.grid
    return float(g.cell_area * np.sum((g.x * v.vx + g.y * v.vy) * w.values))
