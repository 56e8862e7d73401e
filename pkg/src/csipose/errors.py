"""Exception types shared across the toolkit."""


class CsiPoseError(Exception):
    """Base class for all csipose errors."""


class ShapeError(CsiPoseError):
    """Structural mismatch between array shapes."""


class FormatError(CsiPoseError):
    """A file does not conform to its container format."""


class VersionError(FormatError):
    """A file declares an unsupported format version."""


class TruncatedFileError(FormatError):
    """A file ends mid-record; carries the byte offset of the truncation."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class TimestampOrderError(FormatError):
    """Timestamps in a stream are not strictly increasing."""


class SyncDriftError(CsiPoseError):
    """Systematic rate mismatch between CSI and pose streams."""


class DegenerateAlignmentError(CsiPoseError):
    """A pose has zero spread and cannot be aligned."""


class CheckpointMismatchError(CsiPoseError):
    """Checkpoint contents diverge from the network layout."""
