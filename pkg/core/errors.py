"""
Error hierarchy for ConvSinger.

Every error carries a category and the process exit code the CLI uses:
  1 – usage / configuration error
  2 – data error (bad score, corpus, checkpoint, shape mismatch)
  3 – numerical failure (non-finite loss, indefinite system, filter overflow)
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class SingerError(Exception):
    """Base class. Raised errors are mapped to exit codes by the CLI."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, category: str = ""):
        super().__init__(message)
        self.category = category or self.__class__.__name__


class ConfigError(SingerError):
    exit_code = EXIT_USAGE


class ScoreFormatError(SingerError):
    pass


class FeatureError(SingerError):
    pass


class ShapeError(SingerError):
    pass


class CorpusError(SingerError):
    pass


class CheckpointError(SingerError):
    """reason is one of: truncation, version, corrupt."""

    def __init__(self, message: str, reason: str = "corrupt"):
        super().__init__(message, category=f"checkpoint.{reason}")
        self.reason = reason


class NumericalError(SingerError):
    exit_code = EXIT_NUMERICAL


class IndefiniteMatrixError(NumericalError):
    def __init__(self, message: str, pivot_index: int = -1):
        super().__init__(message, category="indefinite")
        self.pivot_index = pivot_index


class FilterOverflowError(NumericalError):
    pass


class SignalError(SingerError):
    """Audio sample outside the representable range."""
