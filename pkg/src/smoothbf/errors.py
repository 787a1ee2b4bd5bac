"""Exception hierarchy shared by the library and the command line."""


class SmoothBFError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SmoothBFError, ValueError):
    """Invalid option, bandwidth or run configuration."""

    exit_code = 2


class DataError(SmoothBFError, ValueError):
    """Malformed or out-of-range input data."""

    exit_code = 3


class DomainError(DataError):
    """An evaluation point lies outside the declared interval."""


class NumericalError(SmoothBFError, ArithmeticError):
    """A numerical procedure broke down."""

    exit_code = 4


class SingularCorrectionError(NumericalError):
    """Boundary-correction denominator vanished."""


class DegenerateWindowError(NumericalError):
    """A kernel window contains too little data for the requested fit."""


class SingularDensityError(NumericalError):
    """A density estimate that must be positive is not."""


class NonConvergence(NumericalError):
    """Backfitting did not reach tolerance within the sweep cap."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)
