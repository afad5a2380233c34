"""Shared exception types."""


class NumericalError(RuntimeError):
    """A numerical operation broke down (singular matrix, indefinite covariance, ...)."""


class ResourceLimitError(RuntimeError):
    """An operation would exceed a configured size cap."""


class SolverFailure(RuntimeError):
    """An iterative solver could not continue to the requested endpoint."""

    def __init__(self, message: str, t_reached: float | None = None):
        super().__init__(message)
        self.t_reached = t_reached
