"""Periodic grids, field containers, and the shared measure toolkit.

Everything downstream (velocity reconstruction, time integration, entropy
functionals) works on scalar fields sampled on a uniform periodic square
grid.  Quadrature is the plain cell-area Riemann sum, which is spectrally
accurate for smooth fields that decay below round-off at the box boundary,
and which agrees bit-for-bit with the pseudo-spectral discretisation used
by the solvers.

Shifts and dilations are band-limited (trigonometric) interpolation; the
dilation path is used by the exact linear propagator in `evolution`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Fields are considered negligible below this fraction of their peak; used
# by the truncation diagnostics on shifts/dilations.
TRUNCATION_TOL = 1e-13

_DUMP_MAGIC = "vortexlab-field"


class FieldError(ValueError):
    """Raised when a field violates a precondition (non-finite, wrong frame...)."""


class TruncationWarning(UserWarning):
    """Emitted when an operation reads samples materially outside the box."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid on the square [-L, L)^2.

    Parameters
    ----------
    n : int
        Points per axis; must be a power of two.
    half_width : float
        Box half-width L.

    Wavenumber arrays follow the `numpy.fft.rfft2` layout (full first axis,
    half-complex second axis).  All derived arrays are cached and read-only.
    """

    n: int
    half_width: float

    def __post_init__(self):
        if self.n <= 0 or (self.n & (self.n - 1)) != 0:
            raise FieldError(f"grid size must be a positive power of two, got {self.n}")
        if not (self.half_width > 0):
            raise FieldError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    @cached_property
    def axis(self) -> np.ndarray:
        a = -self.half_width + self.spacing * np.arange(self.n)
        a.setflags(write=False)
        return a

    @cached_property
    def x(self) -> np.ndarray:
        x = np.broadcast_to(self.axis[:, None], (self.n, self.n))
        return x

    @cached_property
    def y(self) -> np.ndarray:
        return np.broadcast_to(self.axis[None, :], (self.n, self.n))

    @cached_property
    def r2(self) -> np.ndarray:
        r2 = self.axis[:, None] ** 2 + self.axis[None, :] ** 2
        r2.setflags(write=False)
        return r2

    @cached_property
    def kx(self) -> np.ndarray:
        kf = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        kx = np.broadcast_to(kf[:, None], (self.n, self.n // 2 + 1))
        return kx

    @cached_property
    def ky(self) -> np.ndarray:
        kr = 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.spacing)
        return np.broadcast_to(kr[None, :], (self.n, self.n // 2 + 1))

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = self.kx ** 2 + self.ky ** 2
        k2.setflags(write=False)
        return k2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """1/|k|^2 with the k=0 entry zeroed (zero-mean inversion)."""
        k2 = self.k2
        inv = np.where(k2 > 0, 1.0 / np.where(k2 == 0, 1.0, k2), 0.0)
        inv.setflags(write=False)
        return inv

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = np.pi / self.spacing
        m = (np.abs(self.kx) < (2.0 / 3.0) * kmax) & (np.abs(self.ky) < (2.0 / 3.0) * kmax)
        m.setflags(write=False)
        return m

    def integrate(self, values: np.ndarray) -> float:
        return float(self.cell_area * np.sum(values))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar field on a `Grid2D`, tagged with frame and time.

    frame is "scaled" (similarity variables, time is tau >= 0) or
    "unscaled" (physical variables, time is t > 0).
    """

    grid: Grid2D
    values: np.ndarray
    frame: str = "scaled"
    time: float = 0.0
    meta: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise FieldError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(v)):
            bad = int(np.sum(~np.isfinite(v)))
            raise FieldError(f"field contains {bad} non-finite values")
        if self.frame not in ("scaled", "unscaled"):
            raise FieldError(f"unknown frame {self.frame!r}")
        if self.frame == "scaled" and self.time < 0:
            raise FieldError("scaled-frame time tau must be >= 0")
        if self.frame == "unscaled" and self.time <= 0:
            raise FieldError("unscaled-frame time t must be > 0")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def like(self, values: np.ndarray, time: float | None = None, meta: tuple | None = None) -> "ScalarField":
        """New field on the same grid/frame with replaced values."""
        return ScalarField(self.grid, values, self.frame,
                           self.time if time is None else time,
                           self.meta if meta is None else meta)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Velocity field (vx, vy) on a `Grid2D`."""

    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray
    meta: tuple = ()

    def __post_init__(self):
        for name in ("vx", "vy"):
            v = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            if v.shape != (self.grid.n, self.grid.n):
                raise FieldError(f"{name} shape mismatch")
            if not np.all(np.isfinite(v)):
                raise FieldError(f"{name} contains non-finite values")
            v.setflags(write=False)
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class MomentSet:
    """Total vorticity and low-order moments, all by the grid quadrature."""

    alpha: float
    beta1: float
    beta2: float
    mu2: float


# ---------------------------------------------------------------------------
# spectral helpers (shared by the solvers)

def gradient(grid: Grid2D, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral gradient of a periodic sample array."""
    vh = np.fft.rfft2(values)
    gx = np.fft.irfft2(1j * grid.kx * vh, values.shape)
    gy = np.fft.irfft2(1j * grid.ky * vh, values.shape)
    return gx, gy


def laplacian(grid: Grid2D, values: np.ndarray) -> np.ndarray:
    return np.fft.irfft2(-grid.k2 * np.fft.rfft2(values), values.shape)


def spectral_divergence(v: VectorField) -> float:
    """Max |div v| over the grid, computed spectrally."""
    g = v.grid
    d = np.fft.irfft2(1j * g.kx * np.fft.rfft2(v.vx) + 1j * g.ky * np.fft.rfft2(v.vy), v.vx.shape)
    return float(np.max(np.abs(d)))


# ---------------------------------------------------------------------------
# norms and moments

def weighted_norm(w: ScalarField, m: float) -> float:
    """Weighted L2 norm (integral of (1+|xi|^2)^m w^2)^(1/2).

    Monotone nondecreasing in m since the weight is >= 1.
    """
    if w.frame != "scaled":
        raise FieldError("weighted_norm expects a scaled-frame field")
    if m < 0:
        raise FieldError("weight exponent m must be nonnegative")
    g = w.grid
    return float(np.sqrt(g.cell_area * np.sum((1.0 + g.r2) ** m * w.values ** 2)))


def lp_norm(w: ScalarField, p: float) -> float:
    """Riemann-sum L^p norm; p = inf returns max |w|."""
    if p < 1:
        raise FieldError(f"p must be >= 1, got {p}")
    v = np.abs(w.values)
    if np.isinf(p):
        return float(np.max(v))
    g = w.grid
    return float((g.cell_area * np.sum(v ** p)) ** (1.0 / p))


def moments(w: ScalarField) -> MomentSet:
    """Total vorticity, first moments and second moment of a scaled field."""
    if w.frame != "scaled":
        raise FieldError("moments expects a scaled-frame field")
    g, v = w.grid, w.values
    h2 = g.cell_area
    return MomentSet(alpha=float(h2 * np.sum(v)),
                     beta1=float(h2 * np.sum(g.x * v)),
                     beta2=float(h2 * np.sum(g.y * v)),
                     mu2=float(h2 * np.sum(g.r2 * v)))


def moments_unscaled(w: ScalarField) -> MomentSet:
    """Same quadrature moments for an unscaled (x-frame) field."""
    g, v = w.grid, w.values
    h2 = g.cell_area
    return MomentSet(float(h2 * np.sum(v)), float(h2 * np.sum(g.x * v)),
                     float(h2 * np.sum(g.y * v)), float(h2 * np.sum(g.r2 * v)))


# ---------------------------------------------------------------------------
# closed-form reference fields (shared with the vortex module)

def gaussian_values(grid: Grid2D) -> np.ndarray:
    """G(xi) = exp(-|xi|^2/4) / 4pi sampled on the grid."""
    return np.exp(-grid.r2 / 4.0) / (4.0 * np.pi)


def dipole_values(grid: Grid2D, j: int) -> np.ndarray:
    """F_j = -d_j G = (xi_j / 2) G, the translation eigenfunctions."""
    c = grid.x if j == 1 else grid.y
    return (c / 2.0) * gaussian_values(grid)


def delta_g_values(grid: Grid2D) -> np.ndarray:
    """Laplacian of G in closed form: (|xi|^2 - 4) G / 4."""
    return 0.25 * (grid.r2 - 4.0) * gaussian_values(grid)


# ---------------------------------------------------------------------------
# subspace projections

def project_subspace(w: ScalarField, level: int) -> ScalarField:
    """Remove the slow spectral directions up to `level`.

    level 0 subtracts the component along G (zero total vorticity),
    level 1 additionally along F_1, F_2 (zero first moments),
    level 2 additionally along Laplacian(G) (zero second moment).
    The projections use the explicit formulas
        P0 w = G * int w,   P1 w = sum_j F_j * int xi_j w,
        P2 w = Lap(G) * int (|xi|^2 - 4)/4 w,
    so the output annihilates the corresponding quadrature functionals.
    """
    if level not in (0, 1, 2):
        raise FieldError(f"level must be 0, 1 or 2, got {level}")
    g = w.grid
    mom = moments(w)
    out = w.values - mom.alpha * gaussian_values(g)
    if level >= 1:
        out = out - mom.beta1 * dipole_values(g, 1) - mom.beta2 * dipole_values(g, 2)
    if level == 2:
        h2 = g.cell_area
        c2 = float(h2 * np.sum(0.25 * (g.r2 - 4.0) * w.values))
        out = out - c2 * delta_g_values(g)
    return w.like(out)


# ---------------------------------------------------------------------------
# band-limited shifts and dilations

def _phase_shift(grid: Grid2D, values: np.ndarray, b1: float, b2: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant at xi + b (spectral shift)."""
    vh = np.fft.rfft2(values)
    vh = vh * np.exp(1j * (grid.kx * b1 + grid.ky * b2))
    return np.fft.irfft2(vh, values.shape)


def recenter(w: ScalarField, threshold: float = 1e-8) -> tuple[ScalarField, tuple[float, float]]:
    """Translate w so its first moments vanish; returns (field, shift b).

    The shift is b = (beta1, beta2) / alpha and the translation is spectral.
    Rejects fields whose total vorticity is below `threshold` times the L1
    norm (the shift is undefined there).
    """
    mom = moments(w)
    l1 = lp_norm(w, 1)
    if abs(mom.alpha) < threshold * max(l1, np.finfo(float).tiny):
        raise FieldError("recenter undefined for zero total vorticity")
    b1, b2 = mom.beta1 / mom.alpha, mom.beta2 / mom.alpha
    return w.like(_phase_shift(w.grid, w.values, b1, b2)), (b1, b2)


def _dirichlet_kernel(d: np.ndarray, half_width: float, n: int) -> np.ndarray:
    # Periodic sinc for even n; the Nyquist mode is split symmetrically so
    # real data interpolates to real values.
    z = np.pi * d / (2.0 * half_width)
    sz = np.sin(z)
    val = np.sin(n * z) * np.cos(z) / (n * np.where(np.abs(sz) < 1e-300, 1.0, sz))
    on_node = np.abs(np.remainder(d + half_width, 2.0 * half_width) - half_width) < 1e-12 * half_width
    return np.where(on_node, 1.0, val)


_RESAMPLE_CACHE: dict[tuple, np.ndarray] = {}


def resample_matrix(grid: Grid2D, factor: float) -> np.ndarray:
    """1D interpolation matrix D with D[a, m] = psi(factor*x_a - x_m)."""
    key = (grid.n, grid.half_width, float(factor))
    D = _RESAMPLE_CACHE.get(key)
    if D is None:
        ax = grid.axis
        D = _dirichlet_kernel(factor * ax[:, None] - ax[None, :], grid.half_width, grid.n)
        if len(_RESAMPLE_CACHE) > 64:
            _RESAMPLE_CACHE.clear()
        _RESAMPLE_CACHE[key] = D
    return D


def boundary_magnitude(w: ScalarField) -> float:
    """Largest |w| on the outermost grid ring, relative to max |w|."""
    v = np.abs(w.values)
    peak = float(np.max(v))
    if peak == 0.0:
        return 0.0
    ring = max(float(np.max(v[0, :])), float(np.max(v[-1, :])),
               float(np.max(v[:, 0])), float(np.max(v[:, -1])))
    return ring / peak


def resample(w: ScalarField, factor: float) -> ScalarField:
    """Band-limited evaluation of w(xi * factor) on the same grid.

    For factor > 1 some target points leave the box; those samples are set
    to zero, which matches the true field to truncation tolerance whenever
    the precondition (field negligible outside the box) holds.  A
    `TruncationWarning` is recorded when it does not.
    """
    if not (factor > 0):
        raise FieldError("resample factor must be positive")
    meta = w.meta
    if factor > 1.0:
        bmag = boundary_magnitude(w)
        if bmag > TRUNCATION_TOL:
            msg = (f"resample factor {factor:g} needs samples outside the box while "
                   f"the boundary magnitude is {bmag:.2e} of peak")
            warnings.warn(msg, TruncationWarning, stacklevel=2)
            meta = meta + (msg,)
    D = resample_matrix(w.grid, float(factor))
    out = D @ w.values @ D.T
    if factor > 1.0:
        inside = np.abs(factor * w.grid.axis) <= w.grid.half_width
        out *= inside[:, None] * inside[None, :]
    return w.like(out, meta=meta)


def eval_at_points(w: ScalarField, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of w at arbitrary points (px, py).

    Exact for band-limited data; points outside the box read the periodic
    extension.  Cost is O(n^2) per point, batched through matrix products.
    """
    g = w.grid
    px = np.asarray(px, dtype=float).ravel()
    py = np.asarray(py, dtype=float).ravel()
    Dx = _dirichlet_kernel(px[:, None] - g.axis[None, :], g.half_width, g.n)
    Dy = _dirichlet_kernel(py[:, None] - g.axis[None, :], g.half_width, g.n)
    return np.einsum("pi,ij,pj->p", Dx, w.values, Dy, optimize=True)


# ---------------------------------------------------------------------------
# field dump format

def write_field(w: ScalarField, path) -> None:
    """Self-describing dump: one JSON header line, then raw row-major float64."""
    header = {"format": _DUMP_MAGIC, "version": 1, "frame": w.frame,
              "time": w.time, "n": w.grid.n, "half_width": w.grid.half_width,
              "dtype": "<f8", "order": "C"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(w.values, dtype="<f8").tobytes())


def read_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != _DUMP_MAGIC:
            raise FieldError(f"{path}: not a field dump")
        n = int(header["n"])
        raw = fh.read(8 * n * n)
    values = np.frombuffer(raw, dtype="<f8").reshape(n, n)
    grid = Grid2D(n, float(header["half_width"]))
    return ScalarField(grid, values, header["frame"], float(header["time"]))
