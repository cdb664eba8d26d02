"""
Utility functions for reading toolkit settings from the environment or a .env
file using the `python-dotenv` library, plus one-time logging setup.
"""
import logging
import os
from typing import Optional

from dotenv import find_dotenv, get_key

from config import RUNS_DIR

# Find the .env file in the project root. The path is loaded once and reused.
env_path = find_dotenv(usecwd=True)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_setting(name: str, default: Optional[str] = None) -> Optional[str]:
    """
    Look up a setting, preferring the process environment over the .env file.

    Args:
        name (str): Setting name, e.g. ``DEK_OUT_DIR``.
        default (str | None): Value returned when the setting is absent or empty.

    Returns:
        str | None: The configured value or ``default``.
    """
    value = os.environ.get(name)
    if value:
        return value

    if env_path:
        value = get_key(env_path, name)
        if value:
            return value

    return default


def output_dir() -> str:
    """Root directory for run artifacts (``DEK_OUT_DIR``, default ``runs``)."""
    return get_setting("DEK_OUT_DIR", RUNS_DIR)


def configure_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging once. The level comes from the argument, then
    ``DEK_LOG_LEVEL``, then INFO.
    """
    level_name = (level or get_setting("DEK_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.INFO), format=LOG_FORMAT)
    logging.getLogger().setLevel(getattr(logging, level_name, logging.INFO))
