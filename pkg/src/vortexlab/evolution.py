"""Time integration in similarity variables and in the physical frame.

The rescaled equation  d_tau w + (v . grad) w = Lw,  L = Lap + xi.grad/2 + 1,
is advanced by Strang splitting: the linear part is applied *exactly* through
the closed-form kernel of exp(tau L) (a dilation composed with a heat blur),
and the advection part by an explicit RK4 substep with spectral gradients.
The dilation term xi.grad/2 is never finite-differenced; it is unbounded on
the box and differencing it destroys stability near the boundary.

The physical-frame equation  d_t omega + (u . grad) omega = Lap omega  is
integrated by an integrating-factor RK4 on a fixed box and remapped to
similarity variables for diagnostics, cross-validating the scaled solver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as _dcfield

import numpy as np

from . import lyapunov
from .biot_savart import velocity_core
from .fields import (FieldError, Grid2D, ScalarField, TruncationWarning,
                     boundary_magnitude, dipole_values, gaussian_values,
                     gradient, laplacian, resample_matrix, _dirichlet_kernel)
from .vortex import azimuthal_profile, azimuthal_profile_slope

CFL_LIMIT = 0.9


class SolverAbort(RuntimeError):
    """Raised when the state turns non-finite; carries the failing step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of a scaled-frame run."""

    dt: float = 0.01
    end_tau: float = 5.0
    record_every: int = 10
    dealias: str = "two-thirds"          # or "none"
    scheme: str = "strang-split"         # or "unscaled-remap"
    norm_ms: tuple = (0.0, 2.0, 4.0)
    snapshot_every: int = 0              # in recorded samples; 0 = never
    unscaled_grid_n: int = 512           # used by the unscaled-remap scheme
    unscaled_half_width: float = 24.0
    unscaled_dt: float = 0.02

    def __post_init__(self):
        if not (self.dt > 0 and self.end_tau > 0):
            raise FieldError("dt and end_tau must be positive")
        if self.dealias not in ("two-thirds", "none"):
            raise FieldError(f"unknown dealias option {self.dealias!r}")
        if self.scheme not in ("strang-split", "unscaled-remap"):
            raise FieldError(f"unknown scheme {self.scheme!r}")


@dataclass
class TrajectoryRecord:
    """Diagnostics sampled along a run; arrays share the `taus` axis."""

    taus: np.ndarray
    columns: dict
    m_list: tuple
    alpha0: float
    beta0: tuple
    h0: float | None = None
    snapshots: list = _dcfield(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""

    def column(self, name: str) -> np.ndarray:
        if name == "tau":
            return self.taus
        if name not in self.columns:
            raise KeyError(f"no column {name!r}; have {sorted(self.columns)}")
        return self.columns[name]

    @staticmethod
    def res_key(m: float) -> str:
        return f"res_m{m:g}"


# ---------------------------------------------------------------------------
# exact linear propagator

def _s_apply(grid: Grid2D, values: np.ndarray, tau: float) -> np.ndarray:
    """Exact action of exp(tau L) on sample values.

    For a(tau) = 1 - e^(-tau) >= 4 h^2 the separable Gaussian kernel
    (1/4 pi a) exp(-|xi - y e^(-tau/2)|^2 / 4a) is applied as two matrix
    products; the grid resolves the kernel there and the result is exact to
    quadrature (i.e. machine) precision.  For smaller tau the kernel is
    under-resolved, so the equivalent spectral form is used instead:
    contract coordinates by e^(tau/2), multiply by e^tau, then apply the
    heat multiplier exp(-a |k|^2).  The contraction reads wrapped samples
    once e^(tau/2) L leaves the box, so long tau are split into substeps
    small enough that the wrapped reads sit below round-off for fields that
    decay at the boundary.
    """
    h = grid.spacing
    a = -math.expm1(-tau)
    if a >= 4.0 * h * h:
        e = math.exp(-tau / 2.0)
        ax = grid.axis
        M = h * np.exp(-(ax[:, None] - e * ax[None, :]) ** 2 / (4.0 * a)) / math.sqrt(4.0 * np.pi * a)
        return M @ values @ M.T
    nsub = max(1, math.ceil(tau / 0.12))
    sub = tau / nsub
    out = values
    for _ in range(nsub):
        D = resample_matrix(grid, math.exp(sub / 2.0))
        out = (D @ out @ D.T) * math.exp(sub)
        asub = -math.expm1(-sub)
        out = np.fft.irfft2(np.fft.rfft2(out) * np.exp(-asub * grid.k2), out.shape)
    return out


def semigroup_S(w: ScalarField, tau: float) -> ScalarField:
    """Exact linear semigroup exp(tau L) applied to a scaled field."""
    if not (tau > 0):
        raise FieldError("semigroup_S needs tau > 0")
    meta = w.meta
    bmag = boundary_magnitude(w)
    if bmag > 1e-10:
        msg = f"semigroup truncates a field with boundary magnitude {bmag:.2e} of peak"
        warnings.warn(msg, TruncationWarning, stacklevel=2)
        meta = meta + (msg,)
    return w.like(_s_apply(w.grid, w.values, tau), time=w.time + tau, meta=meta)


# ---------------------------------------------------------------------------
# discrete generator and linearised operator (single applies, for checks)

def generator_apply(w: ScalarField) -> ScalarField:
    """L w = Lap w + xi.grad w / 2 + w as a one-shot spectral apply.

    Not used for stepping (see `_s_apply`); exposed so the frozen
    eigenfunction relations can be verified on the grid operators.
    """
    g = w.grid
    wx, wy = gradient(g, w.values)
    return w.like(laplacian(g, w.values) + 0.5 * (g.x * wx + g.y * wy) + w.values)


_GRADG_CACHE: dict[tuple, tuple] = {}


def _grad_g(grid: Grid2D):
    key = (grid.n, grid.half_width)
    hit = _GRADG_CACHE.get(key)
    if hit is None:
        G = gaussian_values(grid)
        hit = (-0.5 * grid.x * G, -0.5 * grid.y * G)
        _GRADG_CACHE[key] = hit
    return hit


def lam_apply(R: ScalarField, dealias: bool = True) -> ScalarField:
    """Linearised advection  Lam R = vG . grad R + vR . grad G.

    vR is the Biot-Savart velocity of R; grad G is analytic.
    """
    g = R.grid
    phi = azimuthal_profile(g.r2)
    vel1, vel2 = velocity_core(g, R.values)
    rx, ry = gradient(g, R.values)
    gx, gy = _grad_g(g)
    prod = (-g.y * phi) * rx + (g.x * phi) * ry + vel1 * gx + vel2 * gy
    if dealias:
        prod = np.fft.irfft2(g.dealias_mask * np.fft.rfft2(prod), prod.shape)
    return R.like(prod)


# ---------------------------------------------------------------------------
# one Strang step of the nonlinear / linearised flow

def _advection_rhs(grid: Grid2D, w: np.ndarray, velocity, mask) -> np.ndarray:
    v1, v2 = velocity(w)
    wx, wy = gradient(grid, w)
    prod = v1 * wx + v2 * wy
    if mask is not None:
        prod = np.fft.irfft2(mask * np.fft.rfft2(prod), prod.shape)
    return -prod


def _rk4(grid: Grid2D, w: np.ndarray, rhs, dt: float) -> np.ndarray:
    k1 = rhs(w)
    k2 = rhs(w + 0.5 * dt * k1)
    k3 = rhs(w + 0.5 * dt * k2)
    k4 = rhs(w + dt * k3)
    return w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_sv(w: ScalarField, dt: float, velocity=None, dealias: bool = True) -> ScalarField:
    """One Strang-split step of the rescaled vorticity equation.

    `velocity` maps sample values to (vx, vy); defaults to the spectral
    Biot-Savart of the state itself (the self-consistent nonlinear flow).
    """
    if w.frame != "scaled":
        raise FieldError("step_sv expects a scaled-frame field")
    g = w.grid
    if velocity is None:
        velocity = lambda vals: velocity_core(g, vals)
    mask = g.dealias_mask if dealias else None
    out = _s_apply(g, w.values, dt / 2.0)
    vmax = float(np.max(np.hypot(*velocity(out))))
    if vmax * dt / g.spacing > CFL_LIMIT:
        warnings.warn(f"advective CFL number {vmax * dt / g.spacing:.2f} exceeds {CFL_LIMIT}",
                      RuntimeWarning, stacklevel=2)
    out = _rk4(g, out, lambda arr: _advection_rhs(g, arr, velocity, mask), dt)
    out = _s_apply(g, out, dt / 2.0)
    if not np.all(np.isfinite(out)):
        raise SolverAbort(-1, "non-finite state after step")
    return w.like(out, time=w.time + dt)


def linearized_step(R: ScalarField, alpha: float, dt: float, dealias: bool = True) -> ScalarField:
    """One step of  d_tau R = L R - alpha Lam R  by the same splitting."""
    g = R.grid
    mask = g.dealias_mask if dealias else None
    phi = azimuthal_profile(g.r2)
    vg1, vg2 = -g.y * phi, g.x * phi
    gx, gy = _grad_g(g)

    def rhs(arr):
        v1, v2 = velocity_core(g, arr)
        rx, ry = gradient(g, arr)
        prod = vg1 * rx + vg2 * ry + v1 * gx + v2 * gy
        if mask is not None:
            prod = np.fft.irfft2(mask * np.fft.rfft2(prod), prod.shape)
        return -alpha * prod

    out = _s_apply(g, R.values, dt / 2.0)
    out = _rk4(g, out, rhs, dt)
    out = _s_apply(g, out, dt / 2.0)
    return R.like(out, time=R.time + dt)


# ---------------------------------------------------------------------------
# diagnostics row

def _diagnostics_row(grid: Grid2D, w: np.ndarray, tau: float, m_list, beta0) -> dict:
    h2 = grid.cell_area
    G = gaussian_values(grid)
    alpha = h2 * np.sum(w)
    row = {
        "alpha": alpha,
        "beta1": h2 * np.sum(grid.x * w),
        "beta2": h2 * np.sum(grid.y * w),
        "mu2": h2 * np.sum(grid.r2 * w),
        "phi": h2 * np.sum(np.abs(w)),
        "min_w": float(np.min(w)),
        "max_w": float(np.max(w)),
    }
    res = w - alpha * G
    row["res_l1"] = h2 * np.sum(np.abs(res))
    for m in m_list:
        row[TrajectoryRecord.res_key(m)] = math.sqrt(h2 * np.sum((1.0 + grid.r2) ** m * res ** 2))
    decay = math.exp(-tau / 2.0)
    res2 = res - decay * (beta0[0] * dipole_values(grid, 1) + beta0[1] * dipole_values(grid, 2))
    m_top = max(m_list) if m_list else 2.0
    row["second_order"] = math.sqrt(h2 * np.sum((1.0 + grid.r2) ** m_top * res2 ** 2))
    gx, gy = gradient(grid, w)
    row["grad_l2"] = math.sqrt(h2 * np.sum(gx ** 2 + gy ** 2))
    # entropy pair is defined for nonnegative data of positive total mass
    if alpha > 0 and row["min_w"] >= -lyapunov.UNDERSHOOT_FLOOR * max(row["max_w"], 0.0):
        row["H"] = lyapunov.entropy_values(grid, w)
        row["I"] = lyapunov.fisher_values(grid, w)
        row["entropy_valid"] = 1.0
    else:
        row["H"] = math.nan
        row["I"] = math.nan
        row["entropy_valid"] = 0.0
    return row


def _new_columns(template: dict) -> dict:
    return {k: [] for k in template}


def simulate(w0: ScalarField, cfg: SolverConfig) -> TrajectoryRecord:
    """Advance the rescaled equation to cfg.end_tau, recording diagnostics.

    Deterministic for a fixed config.  A non-finite state aborts the run and
    the partial trajectory is returned with `aborted` set.
    """
    if cfg.scheme == "unscaled-remap":
        return _simulate_by_remap(w0, cfg)
    if w0.frame != "scaled" or w0.time != 0.0:
        raise FieldError("simulate expects a scaled-frame field at tau = 0")
    g = w0.grid
    mom0_b = (float(g.cell_area * np.sum(g.x * w0.values)),
              float(g.cell_area * np.sum(g.y * w0.values)))
    nsteps = int(round(cfg.end_tau / cfg.dt))
    dealias = cfg.dealias == "two-thirds"
    w = w0.values.copy()
    row0 = _diagnostics_row(g, w, 0.0, cfg.norm_ms, mom0_b)
    taus = [0.0]
    cols = _new_columns(row0)
    for k, v in row0.items():
        cols[k].append(v)
    snapshots = []
    if cfg.snapshot_every:
        snapshots.append((0.0, w0))
    aborted, reason = False, ""
    velocity = lambda vals: velocity_core(g, vals)
    mask = g.dealias_mask if dealias else None
    nrec = 0
    for step in range(1, nsteps + 1):
        w = _s_apply(g, w, cfg.dt / 2.0)
        w = _rk4(g, w, lambda arr: _advection_rhs(g, arr, velocity, mask), cfg.dt)
        w = _s_apply(g, w, cfg.dt / 2.0)
        if not np.all(np.isfinite(w)):
            aborted, reason = True, f"non-finite state at step {step}"
            break
        if step % cfg.record_every == 0 or step == nsteps:
            tau = step * cfg.dt
            taus.append(tau)
            for k, v in _diagnostics_row(g, w, tau, cfg.norm_ms, mom0_b).items():
                cols[k].append(v)
            nrec += 1
            if cfg.snapshot_every and nrec % cfg.snapshot_every == 0:
                snapshots.append((tau, w0.like(w.copy(), time=tau)))
    rec = TrajectoryRecord(
        taus=np.asarray(taus), columns={k: np.asarray(v) for k, v in cols.items()},
        m_list=tuple(cfg.norm_ms), alpha0=row0["alpha"], beta0=mom0_b,
        h0=row0["H"] if row0["entropy_valid"] else None,
        snapshots=snapshots, aborted=aborted, abort_reason=reason)
    return rec


# ---------------------------------------------------------------------------
# physical-frame integrator and the frame remap

def _oseen_basis(grid: Grid2D, t: float):
    """Vortex + dipole samples and closed-form velocities at physical time t."""
    s = math.sqrt(t)
    r2s = grid.r2 / t
    E = np.exp(-r2s / 4.0)
    g = E / (4.0 * np.pi * t)
    xs, ys = grid.x / s, grid.y / s
    f1 = (xs / 2.0) * g / s
    f2 = (ys / 2.0) * g / s
    phi = azimuthal_profile(r2s)
    slope = azimuthal_profile_slope(r2s)
    vg = (-ys * phi / s, xs * phi / s)
    vf1 = ((xs * ys * slope) / t, (-phi - xs * xs * slope) / t)
    vf2 = ((phi + ys * ys * slope) / t, (-xs * ys * slope) / t)
    return g, f1, f2, vg, vf1, vf2


def _velocity_unscaled(grid: Grid2D, om: np.ndarray, basis):
    g0, f1, f2, vg, vf1, vf2 = basis
    h2 = grid.cell_area
    a = h2 * np.sum(om)
    b1 = h2 * np.sum(grid.x * om)
    b2 = h2 * np.sum(grid.y * om)
    R = om - a * g0 - b1 * f1 - b2 * f2
    rh = np.fft.rfft2(R)
    v1 = np.fft.irfft2(1j * grid.ky * rh * grid.inv_k2, om.shape)
    v2 = np.fft.irfft2(-1j * grid.kx * rh * grid.inv_k2, om.shape)
    v1 += a * vg[0] + b1 * vf1[0] + b2 * vf2[0]
    v2 += a * vg[1] + b1 * vf1[1] + b2 * vf2[1]
    return v1, v2


def _nonlinear_unscaled(grid: Grid2D, om: np.ndarray, basis, mask):
    v1, v2 = _velocity_unscaled(grid, om, basis)
    ox, oy = gradient(grid, om)
    prod = v1 * ox + v2 * oy
    if mask is not None:
        prod = np.fft.irfft2(mask * np.fft.rfft2(prod), prod.shape)
    return -prod


def _ifrk4_step(grid: Grid2D, om: np.ndarray, t: float, dt: float, mask) -> np.ndarray:
    """Integrating-factor RK4 for  d_t omega = Lap omega + N(omega, t)."""
    Eh = np.exp(-grid.k2 * (dt / 2.0))
    Ef = Eh * Eh
    b0 = _oseen_basis(grid, t)
    bh = _oseen_basis(grid, t + dt / 2.0)
    bf = _oseen_basis(grid, t + dt)
    u0 = np.fft.rfft2(om)
    k1 = np.fft.rfft2(_nonlinear_unscaled(grid, om, b0, mask))
    k2 = np.fft.rfft2(_nonlinear_unscaled(grid, np.fft.irfft2(Eh * (u0 + dt / 2.0 * k1), om.shape), bh, mask))
    k3 = np.fft.rfft2(_nonlinear_unscaled(grid, np.fft.irfft2(Eh * u0 + dt / 2.0 * k2, om.shape), bh, mask))
    k4 = np.fft.rfft2(_nonlinear_unscaled(grid, np.fft.irfft2(Ef * u0 + dt * Eh * k3, om.shape), bf, mask))
    return np.fft.irfft2(Ef * u0 + dt / 6.0 * (Ef * k1 + 2.0 * Eh * (k2 + k3) + k4), om.shape)


def map_unscaled_to_scaled(omega: ScalarField, scaled_grid: Grid2D,
                           clock: str = "t=e^tau") -> ScalarField:
    """Remap a physical-frame field to similarity variables.

    With the default clock, w(xi, tau) = t * omega(xi sqrt(t), t) at
    tau = log t; the alternative clock "t=e^tau-1" uses tau = log(1 + t).
    Sample points that fall outside the physical box are zeroed (the data
    there is unknown; for decaying fields the loss is below round-off).
    """
    if omega.frame != "unscaled":
        raise FieldError("expected an unscaled-frame field")
    t = omega.time
    if clock == "t=e^tau":
        tau, scale = math.log(t), t
    elif clock == "t=e^tau-1":
        tau, scale = math.log1p(t), 1.0 + t
    else:
        raise FieldError(f"unknown clock {clock!r}")
    s = math.sqrt(scale)
    src = omega.grid
    targets = s * scaled_grid.axis
    D = _dirichlet_kernel(targets[:, None] - src.axis[None, :], src.half_width, src.n)
    w = (D @ omega.values @ D.T) * scale
    inside = np.abs(targets) <= src.half_width - 2.0 * src.spacing
    w *= inside[:, None] * inside[None, :]
    return ScalarField(scaled_grid, w, frame="scaled", time=tau)


def simulate_unscaled(omega0: ScalarField, t_end: float, scaled_grid: Grid2D | None = None,
                      dt: float = 0.02, tau_spacing: float = 0.1,
                      clock: str = "t=e^tau", dealias: bool = True) -> TrajectoryRecord:
    """Integrate the physical-frame vorticity equation from t = 1.

    Records the same scaled-frame diagnostics as `simulate` (by remapping at
    the sample times) plus physical-frame conservation columns prefixed x_.
    """
    if omega0.frame != "unscaled" or omega0.time != 1.0:
        raise FieldError("simulate_unscaled expects an unscaled field at t = 1")
    if not t_end > 1.0:
        raise FieldError("t_end must exceed the initial time t = 1")
    g = omega0.grid
    if scaled_grid is None:
        scaled_grid = Grid2D(g.n // 2, g.half_width / 2.0)
    mask = g.dealias_mask if dealias else None
    if clock == "t=e^tau":
        tau_of = math.log
        tau_end = math.log(t_end)
        t_of = math.exp
    else:
        tau_of = math.log1p
        tau_end = math.log1p(t_end)
        t_of = lambda tau: math.expm1(tau)
    tau_samples = np.arange(tau_of(1.0), tau_end + 1e-12, tau_spacing)
    w0s = map_unscaled_to_scaled(omega0, scaled_grid, clock)
    h2s = scaled_grid.cell_area
    beta0 = (float(h2s * np.sum(scaled_grid.x * w0s.values)),
             float(h2s * np.sum(scaled_grid.y * w0s.values)))
    om = omega0.values.copy()
    t = 1.0
    taus, cols = [], None
    aborted, reason = False, ""
    for tau_k in tau_samples:
        t_target = t_of(tau_k)
        while t < t_target - 1e-12:
            ds = min(dt, t_target - t)
            om = _ifrk4_step(g, om, t, ds, mask)
            t += ds
            if not np.all(np.isfinite(om)):
                aborted, reason = True, f"non-finite state at t = {t:.4f}"
                break
        if aborted:
            break
        snap = ScalarField(g, om, frame="unscaled", time=t)
        ws = map_unscaled_to_scaled(snap, scaled_grid, clock)
        row = _diagnostics_row(scaled_grid, ws.values, float(tau_k - tau_samples[0]), (0.0, 2.0, 4.0), beta0)
        h2 = g.cell_area
        row["x_t"] = t
        row["x_alpha"] = h2 * np.sum(om)
        row["x_beta1"] = h2 * np.sum(g.x * om)
        row["x_beta2"] = h2 * np.sum(g.y * om)
        row["x_t_omega_inf"] = t * float(np.max(np.abs(om)))
        if cols is None:
            cols = _new_columns(row)
        taus.append(float(tau_k))
        for k, v in row.items():
            cols[k].append(v)
    return TrajectoryRecord(
        taus=np.asarray(taus), columns={k: np.asarray(v) for k, v in (cols or {}).items()},
        m_list=(0.0, 2.0, 4.0), alpha0=float(g.cell_area * np.sum(omega0.values)),
        beta0=beta0, snapshots=[], aborted=aborted, abort_reason=reason)


def _simulate_by_remap(w0: ScalarField, cfg: SolverConfig) -> TrajectoryRecord:
    """Run the unscaled integrator for a scaled initial datum (cross-check path)."""
    xg = Grid2D(cfg.unscaled_grid_n, cfg.unscaled_half_width)
    sg = w0.grid
    # the scaled datum at tau = 0 is the physical datum at t = 1
    D = _dirichlet_kernel(xg.axis[:, None] - sg.axis[None, :], sg.half_width, sg.n)
    om0 = D @ w0.values @ D.T
    inside = np.abs(xg.axis) <= sg.half_width
    om0 *= inside[:, None] * inside[None, :]
    omega0 = ScalarField(xg, om0, frame="unscaled", time=1.0)
    return simulate_unscaled(omega0, math.exp(cfg.end_tau), scaled_grid=sg,
                             dt=cfg.unscaled_dt,
                             tau_spacing=cfg.dt * cfg.record_every,
                             dealias=cfg.dealias == "two-thirds")


# ---------------------------------------------------------------------------
# rate fitting and pointwise-bound diagnostics

def fit_loglinear(taus: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log(values) vs tau; returns (-slope, r^2)."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if taus.size < 4:
        raise FieldError(f"need at least 4 samples to fit a rate, got {taus.size}")
    if np.any(values <= 0):
        raise FieldError("decay fit needs strictly positive samples")
    y = np.log(values)
    slope, icpt = np.polyfit(taus, y, 1)
    pred = slope * taus + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(-slope), r2


def fit_decay_rate(record: TrajectoryRecord, quantity: str,
                   window: tuple[float, float]) -> tuple[float, float]:
    """Fitted exponential decay rate of a trajectory column over a tau window."""
    t0, t1 = window
    sel = (record.taus >= t0) & (record.taus <= t1)
    return fit_loglinear(record.taus[sel], record.column(quantity)[sel])


def carlen_loss_ratio(w_tau: ScalarField, w0: ScalarField, beta: float = 0.9) -> float:
    """Max of |w(tau)| over the Gaussian smoothing kernel applied to |w0|.

    The kernel is (1/a) exp(-beta |xi - y e^(-tau/2)|^2 / 4a); boundedness of
    the ratio along runs is the pointwise smoothing diagnostic.  Evaluated
    where |w| exceeds 1e-12 of its peak.
    """
    g = w_tau.grid
    tau = w_tau.time
    a = -math.expm1(-tau)
    e = math.exp(-tau / 2.0)
    ax = g.axis
    M = g.spacing * np.exp(-beta * (ax[:, None] - e * ax[None, :]) ** 2 / (4.0 * a))
    bound = (M @ np.abs(w0.values) @ M.T) / a
    w = np.abs(w_tau.values)
    sel = w > 1e-12 * np.max(w)
    return float(np.max(w[sel] / bound[sel]))


# ---------------------------------------------------------------------------
# CSV export

_CSV_LEAD = ("tau", "alpha", "beta1", "beta2", "mu2", "phi", "H", "I", "min_w", "res_l1")


def trajectory_to_csv(record: TrajectoryRecord, path) -> None:
    """Write the diagnostic table; column set and float text are stable."""
    names = [c for c in _CSV_LEAD if c == "tau" or c in record.columns]
    names += [TrajectoryRecord.res_key(m) for m in record.m_list]
    names += sorted(c for c in record.columns if c not in names and c != "tau")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(record.taus.size):
            row = []
            for c in names:
                v = record.taus[i] if c == "tau" else record.columns[c][i]
                row.append(repr(float(v)))
            fh.write(",".join(row) + "\n")
