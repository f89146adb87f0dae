"""Shared exception hierarchy.

Module-specific errors subclass these so callers can catch either the
precise failure or everything under ``DistillError``.
"""


class DistillError(Exception):
    """Base exception for all dlf-distill errors."""

    pass


class DimensionMismatchError(DistillError):
    """Array shapes do not line up."""

    pass


class InvalidShapeError(DistillError):
    """A requested shape is degenerate (zero or negative extent)."""

    pass


class EmptyDataError(DistillError):
    """An operation received no samples."""

    pass


class NonFiniteLossError(DistillError):
    """An optimizer produced a NaN or infinite objective."""

    pass


class ConfigInvalidError(DistillError):
    """A configuration is internally inconsistent."""

    pass
