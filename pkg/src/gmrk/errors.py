"""Exception hierarchy shared by all solver modules."""


class GMRKError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GMRKError, ValueError):
    """A parameter or input lies outside the domain where a formula is defined."""


class EvaluationError(GMRKError, ArithmeticError):
    """The right-hand side returned a non-finite value.

    Attributes
    ----------
    node : int
        Zero-based stage index whose evaluation failed.
    t : float
        Time at which ``f`` was evaluated.
    """

    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t


class ConditioningError(GMRKError, ArithmeticError):
    """A Gram matrix is singular or too ill-conditioned to solve reliably."""

    def __init__(self, message, condition=None, size=None):
        super().__init__(message)
        self.condition = condition
        self.size = size


class BranchError(GMRKError, RuntimeError):
    """Internal error: no piecewise branch of a closed form matched the inputs."""


class StepError(GMRKError):
    """Wraps a failure inside a multi-step run with the offending step index."""

    def __init__(self, message, step_index):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index
