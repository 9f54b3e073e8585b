"""Exception types shared across the package."""


class ArtivocError(Exception):
    """Base class for all package-raised errors."""


class ParameterError(ArtivocError, ValueError):
    """An argument violates an operation's contract."""


class ChunkSizeError(ParameterError):
    """An audio chunk does not have the required sample count."""


class DataError(ArtivocError, ValueError):
    """Payload values are invalid (NaN, inf, or out-of-contract content)."""


class FormatError(ArtivocError, ValueError):
    """A serialized container has bad magic, version, or structure."""


class TruncationError(FormatError):
    """A serialized container ends before its declared payload."""


class GraphMismatchError(ArtivocError, ValueError):
    """A tensor, head, or stream state does not match the model graph."""


class DecodeError(ArtivocError, ValueError):
    """A network output cannot be decoded (e.g. no pitch evidence)."""


class EnrollmentError(ArtivocError, ValueError):
    """Speaker enrollment failed (e.g. no voiced content)."""


class StateError(ArtivocError, RuntimeError):
    """An operation was called on a session in the wrong state."""


class UndefinedMetricError(ArtivocError, ValueError):
    """A metric is mathematically undefined for the given inputs."""
