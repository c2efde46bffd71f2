"""Logging setup driven by the ``DPC_LOG`` environment variable."""

import logging
import os
import sys
from typing import Optional, Union

LOG_ENV_VAR = "DPC_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_ROOT = "dualpath_aec"


def get_logger(name: str) -> logging.Logger:
    """Return a logger below the package root logger."""
    if name == _ROOT or name.startswith(_ROOT + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{_ROOT}.{name}")


def _resolve_level(level: Union[str, int, None]) -> int:
    if level is None:
        level = os.environ.get(LOG_ENV_VAR, "WARNING")
    if isinstance(level, int):
        return level
    text = str(level).strip()
    if text.isdigit():
        return int(text)
    resolved = logging.getLevelName(text.upper())
    if isinstance(resolved, int):
        return resolved
    logging.getLogger(_ROOT).warning(
        "Ignoring invalid %s value %r", LOG_ENV_VAR, level
    )
    return logging.WARNING


def configure_logging(level: Union[str, int, None] = None) -> logging.Logger:
    """
    Send package log records to stderr.

    Args:
        level: Level name or number. Falls back to ``DPC_LOG``, then
            ``WARNING``.

    Returns:
        The package root logger.
    """
    root = logging.getLogger(_ROOT)
    for handler in list(root.handlers):
        if getattr(handler, "_dpc_handler", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._dpc_handler = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(_resolve_level(level))
    return root


def set_level(level: Optional[Union[str, int]]) -> None:
    """Change the package log level without touching handlers."""
    logging.getLogger(_ROOT).setLevel(_resolve_level(level))
