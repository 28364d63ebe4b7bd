"""Exception types shared across the package."""

from __future__ import annotations


class ConvSearchError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(ConvSearchError):
    """Corpus ingestion rejected the input (duplicate id, malformed record, empty stream)."""


class ConfigError(ConvSearchError):
    """A configuration file or mapping contains an unknown or invalid key."""


class FormatError(ConvSearchError):
    """A runfile or qrels stream violates the expected column format."""


class TransportError(ConvSearchError):
    """The model server could not be reached; the message names the endpoint."""


class ProtocolError(ConvSearchError):
    """The model server answered with a malformed or wrong-shaped response."""


class MissingResponseError(ConvSearchError):
    """A turn references a canonical response id that is not in the corpus."""


class StageError(ConvSearchError):
    """A pipeline stage failed; carries the stage label for attribution."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
