"""Exception hierarchy shared by all tempscale modules."""


class TempscaleError(Exception):
    """Base class for all errors raised by this package."""


class LogParseError(TempscaleError):
    """A manifest or loss-log file is malformed.

    Carries the offending line number when known (0 for file-level problems).
    """

    def __init__(self, message, line_number=0):
        super().__init__(message)
        self.line_number = line_number


class InsufficientDataError(TempscaleError):
    """Too few data points for the requested fit or report."""


class DegenerateVarianceError(TempscaleError):
    """R-squared is undefined because the observations have zero variance."""


class NonFiniteModelError(TempscaleError):
    """The model produced a non-finite value at the given parameters."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class SolverError(TempscaleError):
    """The least-squares solver could not produce a usable result."""


class ModelDomainError(TempscaleError):
    """A closed-form model was evaluated outside its domain."""


class MissingCheckpointError(TempscaleError):
    """A requested checkpoint is not present in the trajectory."""


class InsufficientSpanError(TempscaleError):
    """The trajectory does not cover both sides of the separation point."""
