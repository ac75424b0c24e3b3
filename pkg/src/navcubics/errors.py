"""Exception types shared across the package."""


class NavcubicsError(Exception):
    """Base class for all package errors."""


class DegenerateMetricError(NavcubicsError):
    """Metric matrix is not symmetric positive definite at a sampled point."""


class ObstaclePenetrationError(NavcubicsError):
    """A point landed on or inside the obstacle where the potential is undefined."""

    def __init__(self, message, point=None, time=None):
        super().__init__(message)
        self.point = point
        self.time = time


class IntegrationDivergedError(NavcubicsError):
    """Integration produced non-finite state values."""


class InitializationError(NavcubicsError):
    """Initial data inconsistent with the active constraints."""


class ValidationError(NavcubicsError):
    """Scenario file or scenario fields failed validation."""


class SolveFailureError(NavcubicsError):
    """Shooting iteration did not converge.

    Carries the best residual seen and, when available, partial diagnostics
    so callers can still emit a failure report.
    """

    def __init__(self, message, best_residual=None, diagnostics=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.diagnostics = diagnostics or {}
