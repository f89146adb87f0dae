"""Structured logging for dlf-distill.

Pipeline stages and EM fits bind their context (seed, stage, EM mode) with
``run_context``; every event logged inside the block carries those fields.
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any

import structlog
from structlog.contextvars import bound_contextvars, merge_contextvars

from dlf_distill.core.config import get_settings


def _drop_unset(
    _logger: Any, _method: str, event_dict: structlog.typing.EventDict
) -> structlog.typing.EventDict:
    # seed is None outside per-seed stages
    return {key: value for key, value in event_dict.items() if value is not None}


def setup_logging() -> None:
    """Configure structlog for the CLI and library runs."""
    settings = get_settings()
    renderer: structlog.typing.Processor = (
        structlog.dev.ConsoleRenderer()
        if settings.debug
        else structlog.processors.JSONRenderer(sort_keys=True)
    )

    structlog.configure(
        processors=[
            merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            _drop_unset,
            structlog.processors.format_exc_info,
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    # stdout is reserved for CLI results
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, settings.log_level.upper()),
    )


@contextmanager
def run_context(**fields: Any) -> Iterator[None]:
    """Bind ``fields`` to every log event emitted inside the block."""
    with bound_contextvars(**fields):
        yield


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    return structlog.get_logger(name)  # type: ignore[no-any-return]
