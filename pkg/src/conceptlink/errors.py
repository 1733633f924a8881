"""Shared exception types."""


class ConceptLinkError(Exception):
    """Base class for errors raised by this package."""


class BuildError(ConceptLinkError):
    """Raised when a store cannot be built from the given source."""


class ModelFormatError(ConceptLinkError):
    """Raised on corrupt, truncated, or wrong-version model files."""


class DimensionMismatchError(ConceptLinkError):
    """Raised when vector dimensions disagree."""
