"""
Exception hierarchy for the fusion toolkit.
Every error carries the process exit code the CLI reports for it.
"""

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_INTERNAL = 4


class FusionError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code: int = EXIT_INTERNAL


# ============================================================================
# Input errors
# ============================================================================

class InputError(FusionError):
    """Bad, missing or inconsistent input data."""

    exit_code = EXIT_INPUT


class MissingInputError(InputError):
    """A referenced file does not exist."""


class DimensionMismatchError(InputError):
    """Two arrays that must share dimensions do not."""


class TensorFormatError(InputError):
    """A PFTN tensor file is malformed."""


class BadMagicError(TensorFormatError):
    """File does not start with the PFTN magic bytes."""


class UnsupportedVersionError(TensorFormatError):
    """PFTN version byte is not one we can read."""


class UnknownElementTypeError(TensorFormatError):
    """Element-type byte does not name a known type."""


class TruncatedPayloadError(TensorFormatError):
    """File ends before the header or element data is complete."""


class ElementCountMismatchError(TensorFormatError):
    """Declared dims and the number of stored elements disagree."""


class ManifestError(InputError):
    """An ensemble manifest violates its invariants."""


class InvalidManifestError(ManifestError):
    """Manifest fields are missing or out of range."""


class ShapeMismatchError(ManifestError):
    """A referenced tensor does not have the shape the manifest declares."""


class CatalogMismatchError(ManifestError):
    """Class catalog disagrees with the manifest class count or is malformed."""


class NonFiniteValueError(ManifestError):
    """Logits or mask logits contain NaN or Inf."""


class SegmentTableError(InputError):
    """A panoptic PNG and its segment table do not agree."""


class SegmentIdOverflowError(InputError):
    """Segment id does not fit into 24-bit RGB."""


class InfeasiblePackingError(InputError):
    """Synthetic scene instances could not be placed without overlap."""


# ============================================================================
# Configuration and internal errors
# ============================================================================

class ConfigError(FusionError):
    """Invalid parameter value or combination."""

    exit_code = EXIT_CONFIG


class InternalError(FusionError):
    """A condition that indicates a bug rather than bad input."""

    exit_code = EXIT_INTERNAL


class OverlapError(InternalError):
    """Thing claims overlap each other or already-labelled pixels."""
