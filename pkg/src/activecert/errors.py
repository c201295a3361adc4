"""Exception types shared across the package."""


class ActiveCertError(Exception):
    """Base class for all package errors."""


class ArgumentError(ActiveCertError, ValueError):
    """An argument is malformed or violates a stated precondition."""


class DomainError(ActiveCertError, ValueError):
    """A quantity is mathematically undefined for the given input."""


class EigenConvergenceError(ActiveCertError, ArithmeticError):
    """The Jacobi eigensolver failed to converge within its sweep cap."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ModelViolationError(ActiveCertError):
    """A drawn gradient exceeds the declared bound L (wrong user-supplied L)."""


class UnsupportedSizeError(ActiveCertError, ValueError):
    """The requested dimension is too large for an exact computation."""


class MatrixFormatError(ActiveCertError, ValueError):
    """A matrix text file could not be parsed."""


class ConfigError(ActiveCertError, ValueError):
    """An experiment configuration is invalid."""


class TheoremViolation(ActiveCertError, AssertionError):
    """A checked inequality failed beyond its floating-point slack."""
