"""Logging setup shared by the CLI and the pipeline runner."""

import logging
import sys
from typing import Optional, Union

from .config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[Union[str, int]] = None) -> None:
    """
    Configure the ``rbvrisk`` logger hierarchy.

    Args:
        level: Log level name or number; defaults to ``settings.LOG_LEVEL``
    """
    if level is None:
        level = settings.LOG_LEVEL
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())

    root = logging.getLogger("rbvrisk")
    root.setLevel(level)

    # Replace rather than stack handlers when called more than once
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False
