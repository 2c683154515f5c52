"""Exception hierarchy shared across the package."""


class AspenError(Exception):
    """Base class for all package errors."""


class ParameterError(AspenError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(AspenError, ValueError):
    """A configuration is internally inconsistent or unusable."""


class EmptyClassError(AspenError, ValueError):
    pass


class UndefinedCorrelationError(AspenError, ValueError):
    pass


class EmptyReportError(AspenError, ValueError):
    pass


class UndefinedMetricError(AspenError, ValueError):
    pass


class FormatError(AspenError, ValueError):
    """Malformed EpochsFile or checkpoint on disk."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDiverged(AspenError, RuntimeError):
    pass
