"""Exception hierarchy shared by all solver modules.

Grouped into families so the CLI can map them onto distinct exit codes:
configuration problems, solver breakdowns, validation failures, and the
dense-oracle size cap.
"""


class ProfileShiftError(Exception):
    """Base class for all errors raised by this package."""


# --- configuration / input problems ---------------------------------------

class ConfigError(ProfileShiftError):
    """Invalid configuration or input data."""


class ParseError(ConfigError):
    """Config file is missing or not well-formed."""


class ValidationError(ConfigError):
    """Config field violates a range or exactly-one constraint."""


class BadResolution(ConfigError):
    """Requested fewer than one interior node along some axis."""


class EmptyInterior(ConfigError):
    """Mask leaves no interior node in the domain."""


class NotSymmetric(ConfigError):
    """Diffusion matrix a(x,t) is not symmetric at a sampled point."""


class NotElliptic(ConfigError):
    """Smallest eigenvalue of a(x,t) falls below the ellipticity constant."""


class NegativeAbsorption(ConfigError):
    """Absorption rate q(x,t) is negative at a sampled point."""


class UnknownCase(ConfigError):
    """Convergence study requested for an unregistered closed-form case."""


# --- solver breakdowns -----------------------------------------------------

class SolverError(ProfileShiftError):
    """Numerical solver failed."""


class InnerSolveFailure(SolverError):
    """Implicit step's linear solve stagnated (broken generator)."""


class NoConvergence(SolverError):
    """Outer Krylov iteration hit its iteration cap."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Krylov iteration did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e}); the tolerance may be too tight "
            f"or the generator may violate q >= 0 / stability (possible "
            f"spectral radius >= 1)"
        )


class PostCheckFailure(SolverError):
    """A-posteriori profile-shift identity check failed (internal inconsistency)."""


# --- validation outcomes ---------------------------------------------------

class CheckFailure(ProfileShiftError):
    """A mandatory validation check did not pass."""


class NonpositiveMass(CheckFailure):
    """Discrete integral of u(.,0) is not positive; normalization undefined."""


# --- dense-oracle limits ---------------------------------------------------

class TooLarge(ProfileShiftError):
    """Grid exceeds the dense-oracle size cap."""


class NumericalBreakdown(ProfileShiftError):
    """Dense eigen/singular decomposition failed."""
