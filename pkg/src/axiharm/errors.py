"""Exception types raised across the package."""


class DomainError(ValueError):
    """Evaluation at a point where the requested quantity is singular."""


class SolverError(RuntimeError):
    """A solve failed (divergence, non-finite values); carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key or line."""
