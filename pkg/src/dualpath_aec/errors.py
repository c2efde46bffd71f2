"""Exception hierarchy shared by the library and the CLI."""


class DpcError(Exception):
    """Base class for all dualpath-aec errors."""

    exit_code = 1


class ConfigError(DpcError):
    """Invalid, unknown or unsupported configuration."""

    exit_code = 4


class WeightsMismatchError(ConfigError):
    """Weight container does not match the model configuration."""


class WeightsFormatError(DpcError):
    """Weight container file is malformed."""

    exit_code = 3


class AudioFormatError(DpcError):
    """WAV file has an unsupported sample rate or channel layout."""

    exit_code = 3


class ShapeError(DpcError, ValueError):
    """Array shapes or bin counts do not agree."""

    exit_code = 4


class EmptyInputError(DpcError, ValueError):
    """Input signal is empty or shorter than one analysis window."""

    exit_code = 2


class MetricError(DpcError, ValueError):
    """A metric cannot be evaluated on the given signals."""

    exit_code = 2


class SimulationError(DpcError, ValueError):
    """A mixture cannot be synthesized as requested."""

    exit_code = 2


class NumericError(DpcError, ValueError):
    """Input values are NaN or infinite."""

    exit_code = 2
