"""Exception types shared across the package.

Every structured failure maps to one of these so the CLI can turn them
into diagnostics + exit code 1, while genuine bugs still surface as
ordinary tracebacks.
"""


class DmxError(Exception):
    """Base class for all structured errors raised by this package."""


class InvalidArgumentError(DmxError, ValueError):
    """A value is outside its documented domain."""


class DimensionMismatchError(DmxError, ValueError):
    """Array shapes that must agree do not."""


class EmptyInputError(DmxError, ValueError):
    """A collection that must be non-empty is empty."""


class DegenerateStepError(DmxError, ValueError):
    """A sampler step was requested at zero noise where it is undefined."""


class ConfigurationError(DmxError, RuntimeError):
    """Missing or inconsistent run configuration (checkpoints, probes...)."""


class TrainingDivergedError(DmxError, RuntimeError):
    """Training loss blew up and stayed up."""
