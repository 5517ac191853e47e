# Environment driven settings for the command line harness.
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from uncq.errors import ConfigError

# Default file read by load_settings(); absent files are ignored.
ENV_FILE = 'environmentvariables.env'

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


@dataclass(frozen=True)
class Settings:
    data_dir: Path | None
    log_dir: Path | None
    log_level: str
    jobs: int


def load_settings(env_file=ENV_FILE):
    """
    Load settings from the process environment, after merging ``env_file``.

    Args:
        env_file (str): dotenv file to merge; existing variables win.

    Returns:
        Settings: validated settings.

    Raises:
        ConfigError: when UNCQ_JOBS or UNCQ_LOG_LEVEL hold invalid values.
    """
    load_dotenv(env_file)

    data_dir = os.getenv('UNCQ_DATA_DIR')
    log_dir = os.getenv('UNCQ_LOG_DIR')
    log_level = os.getenv('UNCQ_LOG_LEVEL', 'INFO').upper()
    if log_level not in LOG_LEVELS:
        raise ConfigError(f"UNCQ_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {log_level!r}")

    raw_jobs = os.getenv('UNCQ_JOBS', '1')
    try:
        jobs = int(raw_jobs)
    except ValueError:
        raise ConfigError(f"UNCQ_JOBS must be an integer, got {raw_jobs!r}")
    if jobs < 1:
        raise ConfigError(f"UNCQ_JOBS must be at least 1, got {jobs}")

    return Settings(
        data_dir=Path(data_dir) if data_dir else None,
        log_dir=Path(log_dir) if log_dir else None,
        log_level=log_level,
        jobs=jobs,
    )


def level_number(settings):
    return getattr(logging, settings.log_level)
