"""Exception hierarchy shared across the toolkit.

Every error raised on bad input data derives from :class:`DataError` so the
CLI can map it to exit code 2; anything else bubbling out of argument
handling is a usage problem (exit code 64).
"""


class AttnSqueezeError(Exception):
    """Base class for all library errors."""


class DataError(AttnSqueezeError):
    """Malformed or out-of-contract input data."""


class FormatError(DataError):
    """Structural problem in a binary file (ATTN or SPQA)."""

    def __init__(self, message: str, path=None, offset: int | None = None):
        self.path = path
        self.offset = offset
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """File declares an unsupported format version."""


class TruncatedPayloadError(FormatError):
    """File ends before the declared payload is complete."""


class DimensionOverflowError(FormatError):
    """Declared dimensions are zero or implausibly large."""


class TrailingDataError(FormatError):
    """File contains bytes past the declared payload."""


class InvalidValueError(DataError):
    """A numeric value violates its contract (non-finite or out of range)."""

    def __init__(self, message: str, location=None):
        self.location = location
        if location is not None:
            message = f"{message} at {location}"
        super().__init__(message)


class StrayValueError(DataError):
    """A value that must be a codebook level (or zero) is neither."""

    def __init__(self, value: float, location=None):
        self.value = value
        self.location = location
        msg = f"value {value!r} is not a codebook level"
        if location is not None:
            msg = f"{msg} at {location}"
        super().__init__(msg)


class CodeOutOfRangeError(DataError):
    """A packed code is 0 or exceeds the codebook size."""


class BitmapCodeMismatchError(DataError):
    """Row bitmap popcount disagrees with the number of stored codes."""
