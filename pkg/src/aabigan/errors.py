"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when arguments violate an operation's preconditions."""


class UndefinedMetricError(InvalidInputError):
    """Raised when a metric is undefined for the given labels (e.g. one class only)."""


class InsufficientDataError(ValueError):
    """Raised when a scenario asks for more samples than the dataset holds."""


class InvalidSpecError(ValueError):
    """Raised for inconsistent scenario definitions."""


class DatasetError(OSError):
    """Raised when dataset files are missing or unreadable."""


class CorruptDataError(DatasetError):
    """Raised when dataset files fail integrity checks."""


class CheckpointError(OSError):
    """Raised when a checkpoint cannot be read."""


class CorruptCheckpointError(CheckpointError):
    """Raised when checkpoint archives do not match their manifest."""


class TrainingDivergedError(RuntimeError):
    """Raised when a loss becomes NaN or infinite during training."""

    def __init__(self, message: str, last_checkpoint: str | None = None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class ResourceLimitError(RuntimeError):
    """Raised when an enumeration would exceed its size budget."""
