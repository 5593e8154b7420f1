"""Exception hierarchy shared by all modules."""


class WaveRGError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WaveRGError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedFamilyError(DomainError):
    """Requested filter family index is not available."""


class InvalidFilterError(WaveRGError, ValueError):
    """A coefficient sequence violates the orthonormal filter identities."""


class ConvergenceError(WaveRGError, RuntimeError):
    """An iteration stopped before reaching its tolerance.

    Attributes
    ----------
    residual : float
        Last measured residual.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InstabilityError(DomainError):
    """Mass parameter below the stability bound mu^2 >= 2d."""


class InfraredError(WaveRGError, ValueError):
    """A zero-frequency mode entered a computation that needs gamma > 0."""


class SobolevError(WaveRGError, ValueError):
    """Momentum two-point data requested for a filter that is too rough."""


class CutoffError(WaveRGError, ValueError):
    """A momentum cutoff is too small for the requested quantity."""


class FitError(WaveRGError, ValueError):
    """Not enough data for a least-squares fit."""


class ValidationError(WaveRGError, ValueError):
    """A run configuration failed validation.

    Attributes
    ----------
    violations : list of str
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
