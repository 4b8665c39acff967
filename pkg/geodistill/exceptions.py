"""Exception hierarchy shared by every app in the project."""


class GeoDistillError(Exception):
    """Base class for all errors raised by geodistill code."""


class InvalidArgument(GeoDistillError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidState(GeoDistillError):
    """Mutable training state no longer satisfies its invariants."""


class UnsupportedOperation(GeoDistillError):
    """The operation is not defined for this configuration."""


class SizingError(InvalidArgument):
    """An image is too small for the requested crops."""


class ConfigError(GeoDistillError):
    """A run configuration is invalid or does not match the data."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class CheckpointError(GeoDistillError):
    """A checkpoint is corrupt, truncated or fails hash verification."""


class IngestionError(GeoDistillError):
    """A dataset folder failed validation; ``report`` lists every problem."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = list(report or [])

    def __str__(self):
        if not self.report:
            return super().__str__()
        lines = [super().__str__()] + [f"  - {item}" for item in self.report]
        return "\n".join(lines)


class NonFiniteLossError(GeoDistillError):
    """Training produced a NaN/inf loss; ``snapshot`` holds diagnostics."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = dict(snapshot or {})


class UndefinedMetricError(GeoDistillError):
    """A metric has no defined value for the given inputs."""
