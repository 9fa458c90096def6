from __future__ import annotations

import logging
import sys

from app.config import SETTINGS

FMT = "%(asctime)s %(levelname)s %(name)s - %(message)s"
DATEFMT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: str | None = None, *, pretty: bool | None = None) -> None:
    """
    Configure root logging once. Level comes from LOG_LEVEL unless given.
    On an interactive terminal records go through rich; otherwise plain lines.
    """
    level = (level or SETTINGS.log_level).upper()
    if pretty is None:
        pretty = sys.stderr.isatty()
    if pretty:
        from rich.logging import RichHandler
        logging.basicConfig(level=level, format="%(name)s - %(message)s", datefmt=DATEFMT,
                            handlers=[RichHandler(show_path=False, rich_tracebacks=False)])
    else:
        logging.basicConfig(level=level, format=FMT, datefmt=DATEFMT)
