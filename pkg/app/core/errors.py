# FILE 0: errors.py
# Purpose: Exception hierarchy shared by the library, the CLI and the API.
# Dependencies: none


class MetaImputeError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 4


class ConfigError(MetaImputeError):
    """Invalid run configuration, unknown key, unknown method."""

    exit_code = 2


class ImputerConfigError(ConfigError):
    """Invalid imputer kind or hyperparameter."""


class DataError(MetaImputeError):
    """Unreadable or malformed input data."""

    exit_code = 3


class DimensionMismatchError(DataError):
    pass


class ImputationError(MetaImputeError):
    """Runtime failure while fitting or applying an imputer."""

    exit_code = 4


class TrainingError(ImputationError):
    """A training loop produced a non-finite loss or parameter."""


class MetaModelError(ImputationError):
    pass


class BenchmarkError(ImputationError):
    """Failure inside one (imputer, fold) cell of a benchmark run."""

    def __init__(self, imputer: str, fold: int, cause: Exception):
        self.imputer = imputer
        self.fold = fold
        self.cause = cause
        super().__init__(f"imputer '{imputer}' failed on fold {fold}: {cause}")
