"""Exception types shared across the package."""


class SqregError(Exception):
    """Base class for all package-specific errors."""


class DataError(SqregError, ValueError):
    """Invalid input data (bad shapes, non-finite values, unparseable files)."""


class SolverError(SqregError, RuntimeError):
    """An optimization run did not produce a usable solution.

    Carries the solver report (if one exists) in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RankDeficiencyError(SolverError):
    """The design (or constraint) matrix does not have full column rank."""
