"""Core utilities - Configuration, logging, errors, numerics, and storage."""

from .config import Settings, get_settings
from .errors import (
    ConfigInvalidError,
    DimensionMismatchError,
    DistillError,
    EmptyDataError,
    InvalidShapeError,
    NonFiniteLossError,
)
from .logging import get_logger, setup_logging

__all__ = [
    "get_settings",
    "Settings",
    "setup_logging",
    "get_logger",
    "DistillError",
    "DimensionMismatchError",
    "InvalidShapeError",
    "EmptyDataError",
    "NonFiniteLossError",
    "ConfigInvalidError",
]
