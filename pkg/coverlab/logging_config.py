"""Logging setup for the command line."""

import logging
import sys
from pathlib import Path
from typing import List, Optional

NOISY_LOGGERS = ("matplotlib", "PIL")


def configure_logging(level: int = logging.INFO, log_file: Optional[Path] = None) -> None:
    """Route records to stderr, and to ``log_file`` when given.

    Stdout stays reserved for the JSON documents the commands print.

    Args:
        level: Minimum level of coverlab records.
        log_file: Optional file that receives the same records.
    """
    formatter = logging.Formatter(
        "[%(asctime)s] %(levelname)s %(name)s - %(message)s", "%Y-%m-%d %H:%M:%S"
    )
    handlers: List[logging.Handler] = [logging.StreamHandler(stream=sys.stderr)]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers = handlers
    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))
