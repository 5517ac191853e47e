# Shared plumbing for the CLI commands: run configuration, parallel grid jobs,
# manifests, result files and error-to-exit-code mapping.
import functools
import itertools
import logging
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path

import click
import pandas as pd
from tabulate import tabulate

from uncq.errors import ConfigError, DatasetNotFoundError, InvalidInputError, TrainingDivergedError, UncqError
from uncq.store import load_json, save_json, write_ndjson

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'

# Optimizer grid applied to every network-based regression method.
LEARNING_RATES = (1e-2, 1e-3, 1e-4)
WEIGHT_DECAYS = (0.0, 1e-3, 1e-2, 1e-1, 1.0)

FAST_EPOCHS = 500
FULL_EPOCHS = 5000

GRID_ALIASES = {'lr': 'learning_rate', 'wd': 'weight_decay'}


class RunFailed(click.ClickException):
    """ClickException carrying the toolkit's exit code (2 input, 3 numeric)."""

    def __init__(self, message, exit_code=2):
        super().__init__(message)
        self.exit_code = exit_code


def handle_errors(func):
    """Translate toolkit errors raised by a command into exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except UncqError as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise RunFailed(str(e), e.exit_code)
        except FloatingPointError as e:
            logger.error(f"Numeric failure: {e}")
            raise RunFailed(str(e), 3)
        except OSError as e:
            logger.error(f"I/O failure: {e}")
            raise RunFailed(str(e), 2)
    return wrapper


# =======================================
# Run configuration
# =======================================

@dataclass(frozen=True)
class RunConfig:
    command: str
    dataset: str | None = None
    method: str | None = None
    alpha: float = 0.05
    seeds: tuple = (0,)
    grid_point: dict | None = None
    jobs: int = 1
    fast: bool = True
    out: str = 'results'
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("At least one seed is required")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")

    @property
    def out_dir(self):
        return Path(self.out)

    @property
    def epochs(self):
        return self.options.get('epochs') or (FAST_EPOCHS if self.fast else FULL_EPOCHS)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc, allowed_options=None):
        """
        Rebuild a configuration from JSON (a bare config or a run manifest).

        Raises:
            ConfigError: unknown configuration or option keys.
        """
        if isinstance(doc.get('config'), dict):
            doc = doc['config']
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        if 'command' not in doc:
            raise ConfigError("Configuration is missing 'command'")
        options = doc.get('options') or {}
        if allowed_options is not None:
            bad = set(options) - set(allowed_options)
            if bad:
                raise ConfigError(f"Unknown options for {doc['command']}: {sorted(bad)}")
        return cls(**{**doc, 'options': dict(options)})


def parse_seeds(text):
    """A count ("5" gives seeds 0..4) or an explicit list ("3,7,11")."""
    text = str(text).strip()
    try:
        if ',' in text:
            return tuple(int(part) for part in text.split(',') if part.strip())
        count = int(text)
    except ValueError:
        raise ConfigError(f"Cannot parse seeds {text!r}")
    if count < 1:
        raise ConfigError("Seed count must be at least 1")
    return tuple(range(count))


def parse_floats(text, name):
    parts = [p.strip() for p in str(text).split(',') if p.strip()]
    if not parts:
        raise click.UsageError(f"{name} must list at least one value")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"{name} must be a comma separated list of numbers, got {text!r}")


def parse_grid_point(text, allowed):
    """Parse "lr=1e-3,wd=0" into {'learning_rate': 0.001, 'weight_decay': 0.0}."""
    if not text:
        return None
    point = {}
    for item in text.split(','):
        if '=' not in item:
            raise ConfigError(f"Grid point entries look like key=value, got {item!r}")
        key, value = (s.strip() for s in item.split('=', 1))
        key = GRID_ALIASES.get(key, key)
        if key not in allowed:
            raise ConfigError(f"Unknown grid key {key!r}; expected one of {sorted(allowed)}")
        try:
            point[key] = float(value)
        except ValueError:
            raise ConfigError(f"Grid value for {key} must be numeric, got {value!r}")
    return point


def parse_grid(text, allowed):
    """Parse "lr=1e-2|1e-3,wd=0|1e-2" into axes {'learning_rate': (0.01, 0.001), ...}."""
    if not text:
        return None
    axes = {}
    for item in text.split(','):
        if '=' not in item:
            raise ConfigError(f"Grid entries look like key=v1|v2, got {item!r}")
        key, values = (s.strip() for s in item.split('=', 1))
        key = GRID_ALIASES.get(key, key)
        if key not in allowed:
            raise ConfigError(f"Unknown grid key {key!r}; expected one of {sorted(allowed)}")
        try:
            axes[key] = tuple(float(v) for v in values.split('|') if v.strip())
        except ValueError:
            raise ConfigError(f"Grid values for {key} must be numeric, got {values!r}")
        if not axes[key]:
            raise ConfigError(f"Grid axis {key} has no values")
    return axes


def expand_grid(grid_point=None, **axes):
    """Cartesian product of ``axes`` unless a single grid point pins every value."""
    if grid_point:
        return [dict(grid_point)]
    names = list(axes)
    return [dict(zip(names, values)) for values in itertools.product(*(axes[n] for n in names))]


def optimizer_grid(grid_point=None, axes=None):
    """The learning-rate x weight-decay grid; ``axes`` overrides either axis, a grid point pins both."""
    # a partial grid point fills the missing key from the defaults
    if grid_point:
        grid_point = {'learning_rate': 1e-3, 'weight_decay': 0.0, **grid_point}
    axes = {'learning_rate': LEARNING_RATES, 'weight_decay': WEIGHT_DECAYS, **(axes or {})}
    return expand_grid(grid_point, **axes)


def build_config(command, config_path=None, allowed_options=(), **values):
    """
    RunConfig from a JSON file when ``config_path`` is given, otherwise from flag values.

    Raises:
        ConfigError: the file belongs to another command or holds unknown keys.
    """
    if config_path:
        cfg = RunConfig.from_dict(load_json(config_path), allowed_options)
        if cfg.command != command:
            raise ConfigError(f"{config_path} configures {cfg.command!r}, not {command!r}")
        return cfg
    # unset flags arrive as None
    options = {k: v for k, v in values.pop('options', {}).items() if v is not None}
    bad = set(options) - set(allowed_options)
    if bad:
        raise ConfigError(f"Unknown options for {command}: {sorted(bad)}")
    return RunConfig(command=command, options=options, **values)


def default_jobs(ctx, jobs):
    if jobs is not None:
        return jobs
    settings = ctx.obj
    return settings.jobs if settings is not None else 1


def data_dir(ctx):
    settings = ctx.obj
    return settings.data_dir if settings is not None else None


def resolve_dataset(name, data_dir=None, suffixes=('', '.csv')):
    """A direct path, or a name looked up under UNCQ_DATA_DIR."""
    if not name:
        raise InvalidInputError("No dataset given")
    candidates = [Path(name + s) for s in suffixes]
    if data_dir is not None:
        candidates += [Path(data_dir) / (name + s) for s in suffixes]
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    raise DatasetNotFoundError(f"Dataset {name!r} not found (looked in {', '.join(str(c) for c in candidates)})")


# =======================================
# Jobs
# =======================================

def run_jobs(job_fn, specs, jobs=1):
    """
    Run ``job_fn(spec)`` for every spec, up to ``jobs`` at a time, keeping order.

    Jobs that diverge are logged and dropped; other errors propagate.
    """
    def guarded(spec):
        try:
            return job_fn(spec)
        except TrainingDivergedError as e:
            logger.warning(f"Skipping config {spec}: {e}")
            return None

    logger.info(f"Running {len(specs)} jobs with {jobs} workers")
    # pool.map keeps spec order
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(guarded, specs))
    return [r for r in results if r is not None]


# =======================================
# Outputs
# =======================================

def package_version():
    from uncq import __version__
    try:
        described = subprocess.run(
            ['git', 'describe', '--tags', '--always', '--dirty'],
            capture_output=True, text=True, timeout=5, check=True,
        )
        return described.stdout.strip() or __version__
    except (OSError, subprocess.SubprocessError):
        # no git or not a checkout
        return __version__


def write_manifest(cfg, started):
    """Record version, configuration, seeds and wall time next to the results."""
    return save_json(cfg.out_dir / MANIFEST_FILE, {
        'version': package_version(),
        'command': cfg.command,
        'config': cfg.to_dict(),
        'seeds': list(cfg.seeds),
        'wall_time_seconds': round(time.monotonic() - started, 3),
        'created': datetime.now().isoformat(timespec='seconds'),
    })


def write_records(cfg, name, records):
    """Records as newline-delimited JSON plus one aggregated CSV."""
    write_ndjson(cfg.out_dir / f"{name}.ndjson", records)
    if records:
        pd.json_normalize(records).to_csv(cfg.out_dir / f"{name}.csv", index=False)


def write_summary(cfg, name, summary, rows=None, headers='keys'):
    save_json(cfg.out_dir / f"{name}.json", summary)
    if rows:
        pd.DataFrame(rows).to_csv(cfg.out_dir / f"{name}.csv", index=False)
        click.echo(tabulate(rows, headers=headers, floatfmt='.4f'))
