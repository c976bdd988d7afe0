"""Exception types shared across the engine.

Every error surfaced over the CLI/HTTP boundary carries a machine ``code``
drawn from a closed set, so adapters never have to parse messages.
"""

from __future__ import annotations


class MatchboxError(Exception):
    """Base class; ``code`` is a stable machine string."""

    code = "internal_error"
    http_status = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


class InvalidInputError(MatchboxError):
    code = "invalid_input"
    http_status = 400


class InvalidImageError(MatchboxError):
    code = "invalid_image"
    http_status = 400


class InsufficientDataError(MatchboxError):
    code = "insufficient_data"
    http_status = 400


class DegenerateGeometryError(MatchboxError):
    code = "degenerate_geometry"
    http_status = 400


class DetectionFailureError(MatchboxError):
    code = "detection_failure"
    http_status = 422

    def __init__(self, message: str, found: int = 0):
        super().__init__(message)
        self.found = found


class DuplicateSubjectError(MatchboxError):
    code = "duplicate_subject"
    http_status = 409


class NotFoundError(MatchboxError):
    code = "not_found"
    http_status = 404


class EmptyGalleryError(MatchboxError):
    code = "empty_gallery"
    http_status = 409


class SpoofDetectedError(MatchboxError):
    code = "spoof_detected"
    http_status = 403


class StoreCorruptError(MatchboxError):
    code = "store_corrupt"
    http_status = 500


# Closed set of codes allowed over the wire; the service layer asserts
# membership before serializing an error.
ERROR_CODES = frozenset(
    {
        "internal_error",
        "invalid_input",
        "invalid_image",
        "insufficient_data",
        "degenerate_geometry",
        "detection_failure",
        "duplicate_subject",
        "not_found",
        "empty_gallery",
        "spoof_detected",
        "store_corrupt",
    }
)
