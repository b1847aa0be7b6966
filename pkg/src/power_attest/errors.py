"""Exception types shared across the package.

Everything raised deliberately by this package derives from PowerAttestError,
so callers (and the CLI) can separate input/validation failures from plain
bugs.
"""


class PowerAttestError(Exception):
    """Base class for all errors raised by this package."""


# Capture decoding and trace handling.


class MalformedCapture(PowerAttestError):
    """Capture byte stream is not a whole number of 32-bit words."""


class EmptyCapture(PowerAttestError):
    """Capture byte stream contains no samples."""


class TriggersNotFound(PowerAttestError):
    """Trigger pulse detection could not locate two pulses."""


class TooShort(PowerAttestError):
    """Trace has fewer samples past the trigger than the requested window."""


# Synthetic trace generation.


class ProfileTooLong(PowerAttestError):
    """Program profile does not fit in a capture window."""


class DuplicateProgramId(PowerAttestError):
    """Profile set already contains a profile with this program id."""


# Template construction.


class MixedLabels(PowerAttestError):
    """Traces passed to template construction carry different program ids."""


class InsufficientTraces(PowerAttestError):
    """Not enough traces to build or calibrate a template."""


class BadFilterParams(PowerAttestError):
    """Smoothing window/order combination is invalid."""


# Correlation matching.


class LengthMismatch(PowerAttestError):
    """Vectors have different lengths."""


class DegenerateInput(PowerAttestError):
    """A vector is constant, so correlation is undefined."""


class UncalibratedTemplate(PowerAttestError):
    """Template has no correlation threshold set."""


class ThresholdExceedsBatch(PowerAttestError):
    """Required pass count is larger than the number of traces supplied."""


# Evaluation.


class MissingTemplate(PowerAttestError):
    """Corpus contains a program id with no matching template."""


class EmptyCorpus(PowerAttestError):
    """Evaluation corpus yielded no traces."""


# Security parameterization.


class DomainError(PowerAttestError):
    """Numeric argument outside the function's domain."""


class InvalidProbabilities(PowerAttestError):
    """Probability arguments are out of range or out of order."""


class ThresholdOutOfBand(PowerAttestError):
    """Acceptance threshold does not separate the two binomial regimes."""


class NoSolutionBelowCap(PowerAttestError):
    """No trace count below the scan cap meets the security level."""


# File formats and configuration.


class FormatError(PowerAttestError):
    """Serialized artifact is malformed (bad magic, truncation, bad field)."""


class ConfigError(PowerAttestError):
    """Configuration file is malformed or contains unknown keys."""


class IoError(PowerAttestError):
    """Reading or writing an artifact file failed at the OS level."""


# Protocol simulation.


class ProtocolError(PowerAttestError):
    """Protocol machinery was driven outside its state contract."""


class HarnessFailure(PowerAttestError):
    """The attack harness itself misbehaved (for example an honest control
    session failed), as opposed to the defense holding or breaking."""
