"""Exception types shared across the package.

Argument-validation failures raise plain ``ValueError``; the classes here
cover domain conditions callers are expected to handle.
"""


class FacepipeError(Exception):
    """Base class for all facepipe-specific errors."""


class DimensionMismatchError(FacepipeError):
    """Vectors of different dimensions were combined."""


class ZeroVectorError(FacepipeError):
    """A zero-norm vector was used where a direction is required (cosine)."""


class DuplicateIdError(FacepipeError):
    """An id was inserted twice into the same index."""


class EmptyIndexError(FacepipeError):
    """A search was issued against an index with no elements."""


class InvariantError(FacepipeError):
    """A structural invariant check failed (index validation walk)."""


class AugmentationError(FacepipeError):
    """No feasible crop could be produced for the given image and config."""


class ParseError(FacepipeError):
    """A text input (annotations, box lists, embeddings, pairs) is malformed."""


class FileFormatError(FacepipeError):
    """Base class for binary file integrity errors (FLIB / HNSW files)."""


class MagicError(FileFormatError):
    """The file does not start with the expected magic bytes."""


class VersionMismatchError(FileFormatError):
    """The file uses an unsupported format version."""


class TruncatedFileError(FileFormatError):
    """The file is shorter than its declared payload."""


class ChecksumError(FileFormatError):
    """The payload checksum does not match; the file is corrupt."""
