from __future__ import annotations

import logging
from typing import Optional

from .config import Settings, get_settings

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

# Chatty at INFO; only surfaced when the package itself runs at DEBUG.
_QUIET_LOGGERS = ("sqlalchemy.engine", "sqlalchemy.pool")


def resolve_level(name: Optional[str]) -> int:
    """Level number for a name such as "debug"; unknown names fall back to INFO."""
    level = logging.getLevelName((name or "INFO").upper())
    return level if isinstance(level, int) else logging.INFO


def configure_logging(
    settings: Optional[Settings] = None, level_override: Optional[str] = None
) -> int:
    """Configure root logging once; later calls only change the level."""
    settings = settings or get_settings()
    level = resolve_level(level_override or settings.log_level)
    root = logging.getLogger()
    if root.handlers:
        root.setLevel(level)
        for handler in root.handlers:
            handler.setLevel(level)
    else:
        logging.basicConfig(level=level, format=LOG_FORMAT)
    for name in _QUIET_LOGGERS:
        logging.getLogger(name).setLevel(level if level <= logging.DEBUG else logging.WARNING)
    return level
