"""
Structured JSON logging configuration.

Call ``setup_logging()`` once at process startup.
"""

from __future__ import annotations

import logging
import sys
from typing import TextIO

from pythonjsonlogger import jsonlogger

from common.config import LOG_FORMAT, LOG_LEVEL


class _RunContextFilter(logging.Filter):
    """Inject run name and seed path from contextvars into every log record."""

    def filter(self, record: logging.LogRecord) -> bool:
        from common.runcontext import get_run, get_seed_path

        record.run = get_run()  # type: ignore[attr-defined]
        record.seed_path = get_seed_path()  # type: ignore[attr-defined]
        return True


def setup_logging(
    service_name: str = "lab",
    *,
    level: str | None = None,
    fmt: str | None = None,
    stream: TextIO | None = None,
) -> None:
    root = logging.getLogger()
    root.setLevel((level or LOG_LEVEL).upper())

    handler = logging.StreamHandler(stream or sys.stdout)

    if (fmt or LOG_FORMAT) == "json":
        formatter: logging.Formatter = jsonlogger.JsonFormatter(
            fmt="%(asctime)s %(levelname)s %(name)s %(run)s %(seed_path)s %(message)s",
            rename_fields={"asctime": "timestamp", "levelname": "level"},
        )
    else:
        formatter = logging.Formatter("%(asctime)s [%(levelname)s] %(name)s (%(run)s %(seed_path)s) %(message)s")

    handler.setFormatter(formatter)
    handler.addFilter(_RunContextFilter())

    root.handlers.clear()
    root.addHandler(handler)

    logging.getLogger(service_name).debug("Logging initialised", extra={"service": service_name})
