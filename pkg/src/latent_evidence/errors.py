"""Exception types shared across the package."""


class LatentEvidenceError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LatentEvidenceError, ValueError):
    """Array lengths or shapes disagree."""


class SizeError(LatentEvidenceError, ValueError):
    """Problem too large for an enumeration routine."""


class ParameterError(LatentEvidenceError, ValueError):
    """A numeric parameter is outside its valid range."""


class ConfigurationError(LatentEvidenceError, ValueError):
    """An extractor, trainer or CLI configuration is unusable."""


class StateError(LatentEvidenceError, RuntimeError):
    """An object was used before it was fitted / trained / cached."""


class ConvergenceError(LatentEvidenceError, RuntimeError):
    """A solver finished with a KKT residual above tolerance."""

    def __init__(self, residual, tol):
        super().__init__(f"KKT residual {residual:.3e} exceeds tolerance {tol:.1e}")
        self.residual = residual
        self.tol = tol


class NumericalError(LatentEvidenceError, FloatingPointError):
    """Training produced a non-finite loss."""
