"""Exception hierarchy for cstdoa."""


class CstdoaError(Exception):
    """Base class for all errors raised by cstdoa."""


class InvalidSpecError(CstdoaError):
    """An m-sequence or sensing matrix configuration is malformed."""


class PeriodMismatchError(CstdoaError):
    """The feedback taps do not produce a maximum-length sequence."""


class DimensionError(CstdoaError):
    """A vector does not have the length an operator expects."""


class NumericError(CstdoaError):
    """Inputs contain non-finite values or a computation degenerated."""


class DegenerateOperatorError(NumericError):
    """The forward operator has zero norm."""


class NoPeakError(CstdoaError):
    """A channel estimate or correlation has no usable peak."""


class InadmissibleDelayError(CstdoaError):
    """A delay exceeds the travel time across the sensor pair."""


class DegenerateGeometryError(CstdoaError):
    """Bearing lines are parallel and have no unique intersection."""


class UnsupportedTrajectoryError(CstdoaError):
    """The trajectory has no closed form (file-backed path)."""


class TruncationError(CstdoaError):
    """A file-backed source is shorter than the requested duration."""


class AudioFormatError(CstdoaError):
    """Audio input is not 16-bit PCM WAV or raw int16."""


class ConfigError(CstdoaError):
    """Run configuration is invalid or references missing files."""
