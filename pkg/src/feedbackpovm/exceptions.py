"""Exception hierarchy shared by all modules."""


class FeedbackPovmError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FeedbackPovmError, ValueError):
    pass


class TruncationError(FeedbackPovmError):
    """Raised when a Fock-space truncation would drop non-negligible weight."""


class NotPSDError(FeedbackPovmError, ValueError):
    pass


class ParameterError(FeedbackPovmError, ValueError):
    pass


class ScheduleError(FeedbackPovmError, ValueError):
    pass


class ConsistencyError(FeedbackPovmError):
    """An internal probability left its admissible range."""


class ReconstructionError(FeedbackPovmError):
    pass


class DataInconsistencyError(ReconstructionError):
    """Observed counts for an outcome the current estimate deems impossible."""


class OptimizationFailure(FeedbackPovmError):
    pass


class ConfigError(FeedbackPovmError, ValueError):
    pass


class TruncationWarning(UserWarning):
    pass
