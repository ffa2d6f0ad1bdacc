"""Stable invariant fibers for a stochastic heat equation with dynamic boundary values.

The library discretizes a one-dimensional parabolic problem whose endpoint
values are dynamical unknowns, splits the resulting positive operator across a
spectral gap, and computes stable fibers of the random flow as fixed points of
exponentially weighted integral equations.  A small-noise expansion of the
fiber map and a set of end-to-end claim experiments round out the toolkit; the
``foliage`` command line drives everything from flat config files.
"""

from .assembly import AssembledForms, AssemblyError, CoefficientSet, DomainSpec, assemble
from .dynamics import (
    DynamicsError,
    NonlinearitySpec,
    Trajectory,
    estimate_LF,
    eval_F,
    integrate,
    linear_nonlinearity,
    table_nonlinearity,
    tanh_nonlinearity,
    zero_nonlinearity,
)
from .expansion import (
    ExpansionResult,
    RemainderStudy,
    base_deterministic,
    base_noise_response,
    fiber_deterministic,
    fiber_noise_correction,
    first_order_fd_check,
    remainder_study,
)
from .foliation import (
    FiberQuery,
    FiberSolution,
    GapConditionError,
    GapReport,
    PicardConvergenceError,
    fiber_point,
    gap_k,
    lyapunov_perron,
    select_beta,
    shift_fiber_by_noise,
)
from .noise import NoiseError, NoisePath, NoiseSpec, TimeGrid, sample_stationary, scale, shift
from .spectral import (
    SemigroupBoundsReport,
    SpectralError,
    SpectralModel,
    alpha_norm,
    eigendecompose,
    from_coords,
    semigroup_apply,
    semigroup_bounds_report,
    to_coords,
)

__version__ = "0.1.0"

__all__ = [
    "AssembledForms", "AssemblyError", "CoefficientSet", "DomainSpec", "assemble",
    "SpectralModel", "SpectralError", "SemigroupBoundsReport", "eigendecompose",
    "to_coords", "from_coords", "alpha_norm", "semigroup_apply", "semigroup_bounds_report",
    "NoiseSpec", "NoisePath", "NoiseError", "TimeGrid", "sample_stationary", "shift", "scale",
    "NonlinearitySpec", "DynamicsError", "Trajectory", "zero_nonlinearity",
    "linear_nonlinearity", "tanh_nonlinearity", "table_nonlinearity",
    "eval_F", "estimate_LF", "integrate",
    "GapReport", "GapConditionError", "PicardConvergenceError", "FiberQuery", "FiberSolution",
    "gap_k", "select_beta", "lyapunov_perron", "fiber_point", "shift_fiber_by_noise",
    "ExpansionResult", "RemainderStudy", "base_deterministic", "base_noise_response",
    "fiber_deterministic", "fiber_noise_correction", "first_order_fd_check", "remainder_study",
    "__version__",
]
