"""Parabolic diffusion solver with a prescribed change of profile.

Solves du/dt = Au on a 1D/2D domain with homogeneous Dirichlet boundary
values and the two-time condition u(., 0) = u(., T) + gamma, by inverting
the Fredholm system (I - Q) zeta = gamma with a matrix-free Krylov
iteration over the implicit time-T propagator Q, then normalizing to the
unit-mass nonnegative solution.  Includes a dense oracle, spectral
analysis of the well-/ill-posedness contrast, positivity and mass checks,
and convergence studies against closed forms.
"""

from .errors import (
    BadResolution,
    CheckFailure,
    ConfigError,
    EmptyInterior,
    InnerSolveFailure,
    NegativeAbsorption,
    NoConvergence,
    NonpositiveMass,
    NotElliptic,
    NotSymmetric,
    NumericalBreakdown,
    ParseError,
    PostCheckFailure,
    ProfileShiftError,
    SolverError,
    TooLarge,
    UnknownCase,
    ValidationError,
)
from .grid import Domain, Grid, box2d, build_grid, interval
from .operators import (
    ADVECTION_MODES,
    CoefficientCheck,
    CoefficientField,
    DiscreteGenerator,
    absorb,
    anisotropic,
    assemble,
    drift,
    heat,
    tabulated,
    validate_coefficients,
)
from .propagator import (
    StateSlice,
    ThetaStepper,
    TimeGrid,
    Trajectory,
    apply_Q,
    propagate,
    step,
)
from .fredholm import (
    FredholmReport,
    ProfileShift,
    SpectralReport,
    dense_propagator,
    normalize,
    solve_profile_shift,
    spectral_analysis,
    structured_log_spectrum,
)
from .validation import (
    AnalyticCase,
    CASES,
    ConvergenceStudy,
    PosednessRecord,
    PosednessReport,
    PrincipleReport,
    ShiftCheck,
    check_fixed_shift,
    check_mass,
    check_positivity,
    compare_posedness,
    convergence_study,
)
from .cli import ExperimentConfig, ResultBundle, parse_config, run

__version__ = "0.1.0"

__all__ = [
    "ADVECTION_MODES",
    "AnalyticCase",
    "BadResolution",
    "CASES",
    "CheckFailure",
    "CoefficientCheck",
    "CoefficientField",
    "ConfigError",
    "ConvergenceStudy",
    "dense_propagator",
    "DiscreteGenerator",
    "Domain",
    "EmptyInterior",
    "ExperimentConfig",
    "FredholmReport",
    "Grid",
    "InnerSolveFailure",
    "NegativeAbsorption",
    "NoConvergence",
    "NonpositiveMass",
    "NotElliptic",
    "NotSymmetric",
    "NumericalBreakdown",
    "ParseError",
    "PosednessRecord",
    "PosednessReport",
    "PostCheckFailure",
    "PrincipleReport",
    "ProfileShift",
    "ProfileShiftError",
    "ResultBundle",
    "ShiftCheck",
    "SolverError",
    "SpectralReport",
    "StateSlice",
    "ThetaStepper",
    "TimeGrid",
    "TooLarge",
    "Trajectory",
    "UnknownCase",
    "ValidationError",
    "absorb",
    "anisotropic",
    "apply_Q",
    "assemble",
    "box2d",
    "build_grid",
    "check_fixed_shift",
    "check_mass",
    "check_positivity",
    "compare_posedness",
    "convergence_study",
    "drift",
    "heat",
    "interval",
    "normalize",
    "parse_config",
    "propagate",
    "run",
    "solve_profile_shift",
    "spectral_analysis",
    "step",
    "structured_log_spectrum",
    "tabulated",
    "validate_coefficients",
    "__version__",
]
