"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An input violates an operation's preconditions."""


class ConvergenceFailure(RuntimeError):
    """An iterative solver or integrator did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NoPeakError(ValueError):
    """The coherent pattern has no peak above its mean (e.g. a single atom)."""


class ResourceLimit(MemoryError):
    """A dense construction would exceed the configured size guard."""
