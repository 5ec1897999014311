"""Exception hierarchy.

Every error raised on bad input data derives from ``CrosswalkError`` so the
CLI can map it to the data-error exit code in one place.
"""


class CrosswalkError(Exception):
    """Base class for all data errors raised by this package."""


# geometry
class OutOfBounds(CrosswalkError, ValueError):
    pass


class DegeneratePolygon(CrosswalkError, ValueError):
    pass


class InvalidInterval(CrosswalkError, ValueError):
    pass


# scene
class GenerationFailed(CrosswalkError, RuntimeError):
    pass


class ParseError(CrosswalkError, ValueError):
    pass


class SchemaVersionMismatch(CrosswalkError, ValueError):
    pass


# grid files
class BadMagic(CrosswalkError, ValueError):
    pass


class TruncatedFile(CrosswalkError, ValueError):
    pass


class ChecksumMismatch(CrosswalkError, ValueError):
    pass


# losses
class ShapeMismatch(CrosswalkError, ValueError):
    pass


class EmptyMask(CrosswalkError, ValueError):
    pass


# inference
class SliceDegenerate(CrosswalkError, ValueError):
    pass


class EmptyCorridor(CrosswalkError, ValueError):
    pass


class WindowTooShort(CrosswalkError, ValueError):
    pass


class GridMismatch(CrosswalkError, ValueError):
    pass


# eval
class RoadMismatch(CrosswalkError, ValueError):
    pass


class IoError(CrosswalkError, OSError):
    pass
