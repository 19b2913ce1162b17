"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 64, validation
problems exit 1, convergence/oracle problems exit 2.
"""


class OscdampError(Exception):
    """Base class for all package errors."""


class GridFormatError(OscdampError):
    """Malformed grid file; carries the offending line number in the message."""


class ValidationError(OscdampError):
    """Structurally valid input that violates a model requirement."""


class ConvergenceError(OscdampError):
    """Iterative solve failed; carries the final residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(OscdampError):
    """Jacobian singular beyond the known angle-reference nullspace."""


class DomainError(OscdampError):
    """Quantity evaluated outside its mathematical domain (e.g. ln of V <= 0)."""


class DegenerateModeError(OscdampError):
    """The sensitivity denominator is numerically zero for this mode."""


class ReductionError(OscdampError):
    """Algebraic block singular; the DAE cannot be reduced at this point."""


class OracleError(OscdampError):
    """A brute-force verification oracle could not be evaluated."""


class ModeMatchingError(OracleError):
    """Re-solved spectrum has no unambiguous counterpart for the tracked mode."""


class UsageError(OscdampError):
    """Operation invoked outside its documented preconditions."""
