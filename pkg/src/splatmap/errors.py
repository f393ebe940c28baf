"""Exception types shared across the package."""


class SplatmapError(Exception):
    """Base class for all package errors."""


class OutOfRange(SplatmapError):
    """A position or chunk coordinate falls outside the addressable world."""


class Malformed(SplatmapError):
    """An encoded id or metrics file does not decode to valid content."""


class IoFailure(SplatmapError):
    """A disk read or write failed."""


class CorruptChunk(SplatmapError):
    """A chunk or keyframe file has a bad magic, version, or truncated payload."""


class InsufficientEvictable(SplatmapError):
    """Evicting every unprotected chunk would still not free the requested space."""


class NotResident(SplatmapError):
    """An operation required a chunk that is not in the active tier."""


class UnknownKeyframe(SplatmapError):
    """Keyframe id was never added to the store."""


class DuplicateKeyframe(SplatmapError):
    """Keyframe id is already present."""


class EmptyCandidates(SplatmapError):
    """No keyframe shares the query grid cell; caller should fall back."""


class UndefinedOverlap(SplatmapError):
    """Overlap is undefined for an empty visible set."""


class DimensionMismatch(SplatmapError):
    """Two images or maps do not have matching dimensions."""
