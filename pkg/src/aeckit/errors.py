"""Exception hierarchy shared by all aeckit modules."""


class AeckitError(Exception):
    """Base class for all aeckit errors."""


# --- audio I/O ---

class UnsupportedFormatError(AeckitError):
    """WAV codec is not PCM16 or IEEE float32."""


class CorruptHeaderError(AeckitError):
    """File is not a parseable RIFF/WAVE container."""


class EmptyClipError(AeckitError):
    """Operation requires a non-empty clip."""


class TrimExceedsLengthError(AeckitError):
    """Requested trim removes the whole clip."""


class LengthMismatchError(AeckitError):
    """Two signals that must be equally long are not."""


class SilentReferenceError(AeckitError):
    """Reference signal is effectively silent, ratio undefined."""


class SampleRateMismatchError(AeckitError):
    """Clip sample rate differs from the 16 kHz pipeline rate."""


# --- model ---

class InvalidConfigError(AeckitError):
    """Model configuration violates its invariants."""


class ShapeMismatchError(AeckitError):
    """Input tensor shape is incompatible with the model."""


class NonFiniteLossError(AeckitError):
    """Training loss became NaN or infinite."""


class VersionMismatchError(AeckitError):
    """Checkpoint file was written by a newer format version."""


class ChecksumMismatchError(AeckitError):
    """Checkpoint file is truncated or fails its integrity check."""


# --- labels ---

class MissingRatingError(AeckitError):
    """Scenario requires a rating that was not supplied."""


class RatingOutOfRangeError(AeckitError):
    """MOS rating outside the closed interval [1, 5]."""


# --- evaluation ---

class TooShortError(AeckitError):
    """Correlation needs at least two points."""


class MissingPredictionError(AeckitError):
    """A manifest entry has no prediction."""


class SingleModelError(AeckitError):
    """Per-model rank correlation needs at least two models."""
