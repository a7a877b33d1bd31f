"""Exception types shared across the toolkit."""


class EvdesnowError(Exception):
    """Base class for all toolkit errors."""


class OutOfBounds(EvdesnowError):
    """An event lies outside the sensor geometry.

    Carries the index of the first offending event when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidWindow(EvdesnowError):
    """A time window [t0, t1) with t1 <= t0."""


class InvalidBins(EvdesnowError):
    """A voxel grid was requested with zero temporal bins."""


class TimestampOverflow(EvdesnowError):
    """A scaled timestamp no longer fits in 64 bits."""


class SingularHomography(EvdesnowError):
    """A homography matrix that cannot be inverted."""


class EmptyWindow(EvdesnowError):
    """An accumulation window that contains no time span."""


class DimensionMismatch(EvdesnowError):
    """Two image-like arrays disagree in shape."""


class NegativeDepth(EvdesnowError):
    """A depth map with negative entries."""


class GeometryMismatch(EvdesnowError):
    """Event streams or images with incompatible sensor geometry."""


class TooSmall(EvdesnowError):
    """An image too small for a windowed metric."""


class InvalidScene(EvdesnowError):
    """A flake scene description that violates its invariants."""


class BadMagic(EvdesnowError):
    """An event file whose magic number is wrong."""


class BadVersion(EvdesnowError):
    """An event file with an unsupported format version."""


class TruncatedFile(EvdesnowError):
    """An event file shorter than its header promises."""


class CorruptRecord(EvdesnowError):
    """An event record with invalid field values.

    Carries the index of the offending record.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UnsupportedFormat(EvdesnowError):
    """An image or stream format this toolkit does not handle."""


class DecodeError(EvdesnowError):
    """A file that could not be decoded despite a plausible format."""
