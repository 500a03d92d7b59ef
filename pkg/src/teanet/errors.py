"""Error types for the binary clip and checkpoint formats."""


class FormatError(ValueError):
    """A file could not be decoded."""


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class DigestMismatchError(FormatError):
    """Checkpoint contents or the spec it was saved for do not match."""


class InvalidPayloadError(FormatError):
    """The bytes decode but break the record's invariants (e.g. a clip value
    outside [0, 1] or an unknown label)."""
