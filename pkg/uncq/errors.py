# Exception types shared by the toolkit and mapped to CLI exit codes.


class UncqError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 2


class InvalidInputError(UncqError, ValueError):
    """Shapes, ranges or parameters that violate an operation's preconditions."""


class DataFormatError(UncqError, ValueError):
    """A dataset file could not be parsed (CSV, IDX, JSON documents)."""


class DatasetNotFoundError(UncqError, FileNotFoundError):
    """A dataset path or name could not be resolved."""


class ConfigError(UncqError, ValueError):
    """Invalid environment settings or run configuration."""


class UndecidedError(UncqError):
    """The causal direction cannot be decided (e.g. a constant variable)."""


class TrainingDivergedError(UncqError, RuntimeError):
    """A loss or gradient became non-finite during training."""

    exit_code = 3

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
