"""Exception types raised by the toolkit.

Every failure mode a caller may want to distinguish gets its own class;
all inherit from MpcqError so CLI code can catch the lot in one place.
"""


class MpcqError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MpcqError):
    """Tensor dimensions incompatible with the requested operation."""


class CapacityError(MpcqError):
    """Requested bit-width exceeds what the code storage supports."""


class GraphError(MpcqError):
    """Malformed or inconsistent model graph."""


class GraphSyntaxError(GraphError):
    """Graph document violates the schema."""


class CycleError(GraphError):
    """Graph contains a cycle."""


class UnknownOpError(GraphError):
    """Node declares an op kind the executor does not implement."""


class MissingTensorError(GraphError):
    """A node references a tensor name absent from the weight map."""


class ChannelMismatchError(GraphError):
    """Channel arithmetic is inconsistent along a graph path."""


class PairingError(MpcqError):
    """A claimed low/high layer pair has incompatible channel counts."""


class CoverageError(MpcqError):
    """A quantization plan does not cover every weighted layer exactly once."""


class ArchiveError(MpcqError):
    """Base class for tensor-archive format errors."""


class BadMagicError(ArchiveError):
    """File does not start with the archive magic."""


class UnsupportedVersionError(ArchiveError):
    """Archive version is newer than this reader."""


class TruncatedArchiveError(ArchiveError):
    """Archive payload ends mid-record."""


class DuplicateNameError(ArchiveError):
    """Archive stores two tensors under one name."""


class UnsupportedDtypeError(ArchiveError):
    """Archive records a dtype code this implementation does not handle."""
