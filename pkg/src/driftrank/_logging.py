"""Logging setup driven by the CLB_LOG environment variable."""

from __future__ import annotations

import logging
import os
import sys

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def configure_logging() -> None:
    """Route package logs to stderr at the CLB_LOG level (default: error)."""
    level = _LEVELS.get(os.environ.get("CLB_LOG", "error").lower(), logging.ERROR)
    root = logging.getLogger("driftrank")
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
