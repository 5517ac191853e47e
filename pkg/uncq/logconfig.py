# Logging setup: console output plus an optional size-capped log file.
import logging
from logging.handlers import RotatingFileHandler

from uncq.config import level_number

# Same cap as the old launcher log (1 MB), one rotated backup.
MAX_LOG_SIZE = 1 * 1024 * 1024
LOG_FILE_NAME = 'uncq.log'
LOG_FORMAT = '[%(asctime)s] %(levelname)s %(name)s: %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def configure_logging(settings):
    """Attach handlers to the ``uncq`` logger; safe to call more than once."""
    root = logging.getLogger('uncq')
    root.setLevel(level_number(settings))
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    root.addHandler(console)

    if settings.log_dir is not None:
        settings.log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            settings.log_dir / LOG_FILE_NAME,
            maxBytes=MAX_LOG_SIZE,
            backupCount=1,
            encoding='utf-8',
        )
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    root.propagate = False
    return root
