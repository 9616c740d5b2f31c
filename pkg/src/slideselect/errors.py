"""Exception hierarchy. CLI maps SlideSelectError to exit code 2."""


class SlideSelectError(Exception):
    """Base class for all data and validation errors."""


class FormatError(SlideSelectError):
    """A file does not conform to its on-disk format."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class CaptionFormatError(FormatError):
    """Malformed caption record; message carries the line number."""


class DuplicateIdError(FormatError):
    """Duplicate record id; message names both line numbers."""


class ValidationError(SlideSelectError):
    """An in-memory object violates one of its invariants."""
