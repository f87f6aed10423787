"""Exception hierarchy shared by all modules."""


class SkewRDError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SkewRDError, ValueError):
    pass


class DomainError(SkewRDError, ValueError):
    """An analysis was requested outside the range where it applies."""


class NumericalFailureError(SkewRDError, RuntimeError):
    pass


class LinearSolverError(NumericalFailureError):
    pass


class StepFailureError(NumericalFailureError):
    """Newton did not converge inside a time step."""

    def __init__(self, message, residual_norm=float("nan"), step=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.step = step


class RankDeficiencyError(NumericalFailureError):
    def __init__(self, message, achievable_rank):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class SelectionFailureError(NumericalFailureError):
    pass
