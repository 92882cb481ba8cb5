"""
Error types shared by the analysis modules.

Every error carries the process exit code the command-line entry point
reports for it: 2 input/usage, 3 observability requirement, 4 analytic or
convergence assumption.
"""

from typing import List, Optional


class ObservabilityError(Exception):
    exit_code = 2

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ModelValidationError(ObservabilityError):
    """Raised when an operation receives a model that fails validation."""

    def __init__(self, message: str, issues: Optional[List] = None):
        super().__init__(message, {"issues": [str(i) for i in issues or []]})
        self.issues = issues or []


class HorizonError(ObservabilityError):
    pass


class NormalizationError(ObservabilityError):
    pass


class NonFiniteResultError(ObservabilityError):
    pass


class UnsupportedNoiseModelError(ObservabilityError):
    pass


class EigenSolverError(ObservabilityError):
    pass


class UnobservableError(ObservabilityError):
    exit_code = 3


class UnboundedDirectionError(UnobservableError):
    pass


class AssumptionViolationError(ObservabilityError):
    exit_code = 4


class DivergentGramianError(AssumptionViolationError):
    pass


class MultiOutputError(AssumptionViolationError):
    pass


class RepeatedEigenvalueError(AssumptionViolationError):
    pass


class UnstableEigenvalueError(AssumptionViolationError):
    pass
