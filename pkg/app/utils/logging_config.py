"""
Logging setup shared by the CLI and operator scripts.
"""
import logging
import sys
from typing import Optional

from app.utils.settings import get_settings


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the root logger.

    Args:
        level: Logging level name; falls back to DAN_LOG_LEVEL.
    """
    settings = get_settings()
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(settings.log_format))
    root.addHandler(handler)
    root.setLevel((level or settings.log_level).upper())
