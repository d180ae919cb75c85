"""Exception hierarchy.

Two families matter to the CLI: domain errors (bad input, violated
preconditions) map to exit status 1, numerical failures map to exit status 2.
"""


class FracPatchError(Exception):
    """Base class for all package errors."""


class DomainError(FracPatchError, ValueError):
    """An argument lies outside the admissible domain."""


class ConfigurationError(DomainError):
    """Invalid grid, solver or run configuration."""


class ShapeError(DomainError):
    """Field and operator live on different grids."""


class DataError(DomainError):
    """Non-finite values in the input data."""


class ResourceError(DomainError):
    """Request exceeds a configured size cap."""


class PreconditionError(DomainError):
    """A hypothesis required by an algorithm does not hold."""


class FitError(DomainError):
    """A regression window contains unusable samples."""


class NumericalError(FracPatchError, ArithmeticError):
    """A numerical procedure failed (blow-up, singular solve, ...)."""

    def __init__(self, msg, last_valid=None):
        super().__init__(msg)
        self.last_valid = last_valid


class IterationError(NumericalError):
    """An iterative method did not converge.

    ``residual`` holds the last residual reached.
    """

    def __init__(self, msg, residual=None, last_valid=None):
        super().__init__(msg, last_valid=last_valid)
        self.residual = residual


class StructuralError(NumericalError):
    """The discrete problem lost a sign property it should have (positivity)."""


class CertificationError(NumericalError):
    """Quadrature could not reach the accuracy needed for a certificate."""


class StructuralWarning(UserWarning):
    """Soft violation of a discrete comparison principle."""
