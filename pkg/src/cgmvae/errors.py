"""Exception types shared across the package."""


class CgmvaeError(Exception):
    """Base class for all package errors."""


class ShapeError(CgmvaeError):
    """Operand shapes are incompatible with the requested operation."""


class NumericDomainError(CgmvaeError):
    """An input lies outside the mathematical domain of an operation."""


class DegenerateEmbeddingError(CgmvaeError):
    """An embedding row has (near-)zero norm and cannot be normalized."""


class ConfigError(CgmvaeError):
    """A configuration value violates its documented constraints."""


class DatasetParseError(CgmvaeError):
    """A dataset file failed validation; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyMixtureError(CgmvaeError):
    """A label set with no positive entries cannot define a mixture prior."""


class OracleInvalidError(CgmvaeError):
    """A verification oracle's preconditions do not hold (e.g. f is nondeterministic)."""


class CheckpointError(CgmvaeError):
    """A checkpoint file is malformed or incompatible with the target dataset."""


class TrainingAborted(CgmvaeError):
    """Training stopped on a non-finite loss or gradient; last good state was kept.

    Carries the run log and parameter snapshots so callers can persist them.
    """

    def __init__(self, message: str):
        super().__init__(message)
        self.runlog = None
        self.best_params = None
        self.last_good_params = None
