#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Logging Setup
Logs go to stderr (and optionally a file) so stdout carries only reports
"""

import logging
import sys
from pathlib import Path

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(config, level: str = None) -> logging.Logger:
    """
    Configure the root logger once from a Config class.

    Args:
        config: Config class providing LOG_LEVEL and LOG_FILE
        level: Optional override of the configured level
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.LOG_FILE:
        Path(config.LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return logging.getLogger('backend')
