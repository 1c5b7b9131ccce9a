"""vortexlab: a numerical laboratory for planar vortex dynamics.

Simulates the two-dimensional vorticity equation in similarity variables,
measures convergence toward the Gaussian vortex through its entropy
Lyapunov functionals, and independently verifies the spectral stability of
the linearised dynamics by a weighted radial discretisation per azimuthal
mode.
"""

__version__ = "0.1.0"

from .biot_savart import velocity_direct, velocity_spectral, weighted_virial
from .evolution import (SolverConfig, TrajectoryRecord, fit_decay_rate,
                        generator_apply, lam_apply, linearized_step,
                        map_unscaled_to_scaled, semigroup_S, simulate,
                        simulate_unscaled, step_sv, trajectory_to_csv)
from .fields import (FieldError, Grid2D, MomentSet, ScalarField,
                     TruncationWarning, VectorField, lp_norm, moments,
                     project_subspace, read_field, recenter, resample,
                     weighted_norm, write_field)
from .lyapunov import (EntropyReport, entropy_dissipation_check,
                       fisher_information, inequality_suite, phi,
                       relative_entropy)
from .spectrum import (OperatorMatrix, RadialGrid, RadialProfile,
                       SpectrumResult, assemble_operator, eigen_spectrum,
                       eigenfunction_decay_check, mode_decompose,
                       semigroup_decay, stream_omega, verify_bounds)
from .vortex import (VortexParams, dipole_velocity, frozen_eigenfunctions,
                     gaussian_G, oseen_unscaled, oseen_velocity_vG)

__all__ = [name for name in dir() if not name.startswith("_")]
