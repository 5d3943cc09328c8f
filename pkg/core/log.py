# core/log.py

import logging
from typing import Optional

from core.config import SDI_LOG_LEVEL

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Installs a single stream handler on the root logger. Safe to call twice."""
    level_name = (level or SDI_LOG_LEVEL).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        raise ValueError(f"Unsupported log level: {level_name}")
    root = logging.getLogger()
    root.setLevel(numeric)
    if not any(getattr(h, "_sdi_handler", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._sdi_handler = True
        root.addHandler(handler)
