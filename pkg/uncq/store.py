# JSON / NDJSON persistence helpers for models, manifests and reports.
import json
import logging
from pathlib import Path

from uncq.errors import DataFormatError, DatasetNotFoundError

logger = logging.getLogger(__name__)


def save_json(path, data):
    """Save ``data`` to ``path`` as indented JSON, creating parent folders."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=4)
    logger.debug(f"Wrote {path}")
    return path


def load_json(path):
    """Load a JSON document; missing or unparsable files raise toolkit errors."""
    path = Path(path)
    if not path.exists():
        raise DatasetNotFoundError(f"No such file: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"Invalid JSON in {path}: {e}")


def write_ndjson(path, records):
    """Write one JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record) + '\n')
    return path


def read_ndjson(path):
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]
