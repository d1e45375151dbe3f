"""Exception hierarchy shared by the library, the CLI and the activities.

Activities turn every ``PhotonStatsError`` into a non-retryable
``ApplicationError``; anything else (disk, network) stays retryable.
"""
from typing import Any, Optional


class PhotonStatsError(Exception):
    """Base class for deterministic failures: retrying will not help."""


class ConfigError(PhotonStatsError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class TagFormatError(PhotonStatsError):
    pass


class MagicMismatchError(TagFormatError):
    pass


class NonMonotonicError(TagFormatError):
    pass


class TruncatedPayloadError(TagFormatError):
    pass


class StreamMismatchError(PhotonStatsError):
    pass


class UnimodalHistogramError(PhotonStatsError):
    pass


class DegenerateSeparationError(PhotonStatsError):
    pass


class InsufficientStatisticsError(PhotonStatsError):
    """Raised with whatever could be computed attached as ``partial``."""

    def __init__(self, message: str, partial: Optional[Any] = None):
        super().__init__(message)
        self.partial = partial


class FitError(PhotonStatsError):
    pass


class PhysicsDomainError(PhotonStatsError, ValueError):
    pass


class MissingInputError(PhotonStatsError):
    """An analysis stage ran before the outputs it reads were produced."""
