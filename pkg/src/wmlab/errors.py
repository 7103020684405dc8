"""Failure types shared across the package.

Solver failures carry enough state to act on (last iterate, residual,
bracket endpoints) instead of burying it in the message string.
"""


class ConfigurationError(ValueError):
    """Inputs violate a documented precondition."""


class UnsupportedOrderError(ConfigurationError):
    """Derivative or jet order outside the served range."""


class DivergedSeriesError(RuntimeError):
    """A recurrence produced a non-finite or runaway coefficient."""

    def __init__(self, message, order=None, coefficient=None):
        super().__init__(message)
        self.order = order
        self.coefficient = coefficient


class NoAnalyticBranchError(RuntimeError):
    """Resonant compatibility condition violated beyond tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonconvergenceError(RuntimeError):
    """An iteration failed to meet its tolerance.

    ``detail`` holds solver-specific diagnostics (last mismatch, bracket
    endpoint values, nearest-to-zero Jacobian eigenvalue, ...).
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail if detail is not None else {}


class DegenerateProfileError(RuntimeError):
    """Profile solve collapsed onto the zero solution."""


class ContractionFailureError(NonconvergenceError):
    """Frozen-linearization (Picard) iteration stopped contracting."""


class DegenerateEigenvalueError(RuntimeError):
    """Projection requested at a multiple or unresolved eigenvalue."""


class BlowupDetectedError(RuntimeError):
    """Evolution left the regime the scheme can represent.

    ``report`` carries the partial time series recorded before the failure.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
