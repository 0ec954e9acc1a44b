import sys

from common.logging import setup_logging
from app.core.config import SERVICE_NAME


def init_logging(level: str | None = None) -> None:
    setup_logging(SERVICE_NAME, level=level, stream=sys.stderr)
