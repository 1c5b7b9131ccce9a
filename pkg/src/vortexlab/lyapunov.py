"""The two Lyapunov functionals and the entropy-method inequality suite.

For nonnegative vorticity of positive total mass the relative entropy
H(w) = int w log(w/G) decreases along the flow at the rate of the relative
Fisher information I(w) = int w |grad log(w/G)|^2, and the chain

    |w - alpha G|_1^2 / (2 alpha)  <=  H(w) - alpha log alpha  <=  I(w)

(Csiszar-Kullback below, logarithmic Sobolev above) turns the dissipation
law into the explicit convergence bound
|w(tau) - alpha G|_1 <= sqrt(2 alpha) (H(w0) - alpha log alpha)^(1/2) e^(-tau/2).

Spectral solutions of positive data undershoot zero by a few ulps, so log
integrands treat values in [-UNDERSHOOT_FLOOR * max w, 0) as 0; anything
more negative invalidates the report (the entropy is not defined for
sign-changing data and no extension is attempted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import FieldError, Grid2D, ScalarField, gradient, lp_norm, moments

# undershoot tolerated in log integrands, as a fraction of max w
UNDERSHOOT_FLOOR = 1e-6
# integrand cutoff for the Fisher information, as a fraction of max w
DENSITY_FLOOR = 1e-14


class PositivityError(FieldError):
    """Entropy functionals need nonnegative data of positive total mass."""


@dataclass(frozen=True)
class EntropyReport:
    """One-shot evaluation of the entropy inequalities on a field."""

    alpha: float
    H: float
    I: float
    phi: float
    ck_lhs: float
    logsob_gap: float
    valid: bool

    @property
    def entropy_gap(self) -> float:
        """H - alpha log alpha, the distance from the entropy minimum."""
        return self.H - self.alpha * math.log(self.alpha)

    @property
    def ck_gap(self) -> float:
        return self.entropy_gap - self.ck_lhs


def _check_positive(grid: Grid2D, w: np.ndarray) -> float:
    wmax = float(np.max(w))
    alpha = grid.cell_area * float(np.sum(w))
    if wmax <= 0 or alpha <= 0:
        raise PositivityError("entropy functionals need positive total vorticity")
    if float(np.min(w)) < -UNDERSHOOT_FLOOR * wmax:
        raise PositivityError(
            f"field is materially negative (min {np.min(w):.3e} vs floor "
            f"{-UNDERSHOOT_FLOOR * wmax:.3e})")
    return alpha


def entropy_values(grid: Grid2D, w: np.ndarray) -> float:
    """H(w) on raw samples; 0 log 0 = 0 and tiny undershoot clamps to 0."""
    pos = w > 0
    t = np.zeros_like(w)
    wp = w[pos]
    t[pos] = wp * np.log(wp)
    t += np.where(pos, w, 0.0) * (grid.r2 / 4.0 + math.log(4.0 * math.pi))
    return float(grid.cell_area * np.sum(t))


def fisher_values(grid: Grid2D, w: np.ndarray) -> float:
    """I(w) = int w |grad w / w + xi/2|^2 with a low-density cutoff.

    The gradient is spectral and applied to w itself (never to log w, whose
    clamped tails would pollute the whole spectrum).
    """
    wx, wy = gradient(grid, w)
    floor = DENSITY_FLOOR * float(np.max(w))
    good = w > floor
    safe = np.where(good, w, 1.0)
    gx = wx / safe + grid.x / 2.0
    gy = wy / safe + grid.y / 2.0
    return float(grid.cell_area * np.sum(np.where(good, w * (gx * gx + gy * gy), 0.0)))


def phi(w: ScalarField) -> float:
    """The L1 Lyapunov functional, int |w|."""
    return lp_norm(w, 1)


def sign_definite_defect(w: ScalarField) -> float:
    """Phi(w) - |int w| >= 0; zero exactly on fields of constant sign."""
    return phi(w) - abs(moments(w).alpha)


def relative_entropy(w: ScalarField) -> float:
    """H(w) = int w log(w / G); needs w >= 0 (up to undershoot) and alpha > 0."""
    _check_positive(w.grid, w.values)
    return entropy_values(w.grid, w.values)


def fisher_information(w: ScalarField) -> float:
    """I(w) = int w |grad log(w / G)|^2; vanishes iff w is a multiple of G."""
    _check_positive(w.grid, w.values)
    return fisher_values(w.grid, w.values)


def inequality_suite(w: ScalarField) -> EntropyReport:
    """Evaluate the Csiszar-Kullback / log-Sobolev chain on one field."""
    try:
        alpha = _check_positive(w.grid, w.values)
    except PositivityError:
        return EntropyReport(alpha=moments(w).alpha, H=math.nan, I=math.nan,
                             phi=phi(w), ck_lhs=math.nan, logsob_gap=math.nan,
                             valid=False)
    H = entropy_values(w.grid, w.values)
    I = fisher_values(w.grid, w.values)
    G = np.exp(-w.grid.r2 / 4.0) / (4.0 * np.pi)
    l1_res = w.grid.cell_area * float(np.sum(np.abs(w.values - alpha * G)))
    ck_lhs = l1_res ** 2 / (2.0 * alpha)
    gap = H - alpha * math.log(alpha)
    return EntropyReport(alpha=alpha, H=H, I=I, phi=phi(w), ck_lhs=ck_lhs,
                         logsob_gap=I - gap, valid=True)


def entropy_dissipation_check(record, floor: float = 1e-10) -> float:
    """Max relative defect of dH/dtau = -I along a recorded trajectory.

    dH/dtau is a centred difference on the recorded samples; the defect is
    normalised by max(max I, floor), the floor keeping stationary
    trajectories (both sides zero) from dividing noise by noise.  Needs at
    least 3 valid samples.
    """
    taus = np.asarray(record.taus, dtype=float)
    H = np.asarray(record.column("H"), dtype=float)
    I = np.asarray(record.column("I"), dtype=float)
    ok = np.isfinite(H) & np.isfinite(I)
    if int(np.sum(ok)) < 3:
        raise FieldError("entropy_dissipation_check needs at least 3 valid samples")
    taus, H, I = taus[ok], H[ok], I[ok]
    dH = (H[2:] - H[:-2]) / (taus[2:] - taus[:-2])
    scale = max(float(np.max(I)), floor)
    return float(np.max(np.abs(dH + I[1:-1])) / scale)


def explicit_bound_margins(record) -> np.ndarray:
    """Margins of  |w - alpha G|_1 <= sqrt(2 alpha) sqrt(H0 - alpha log alpha) e^(-tau/2).

    Returns bound - value at every sample; all entries nonnegative means the
    explicit convergence estimate holds along the run.
    """
    if record.h0 is None:
        raise FieldError("trajectory has no valid initial entropy")
    alpha = record.alpha0
    gap0 = record.h0 - alpha * math.log(alpha)
    gap0 = max(gap0, 0.0)
    bound = math.sqrt(2.0 * alpha * gap0) * np.exp(-np.asarray(record.taus) / 2.0)
    return bound - np.asarray(record.column("res_l1"))
