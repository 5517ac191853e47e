# synth: write generated datasets to disk as reproducible fixtures.
import logging
import time
from pathlib import Path

import click
import numpy as np

from uncq.data import CAUSAL_KINDS, gen_causal_pair, gen_sinusoid, table_from_arrays, write_csv, write_idx
from uncq.errors import InvalidInputError
from uncq.net import make_rng
from uncq.runner import build_config, handle_errors, write_manifest

logger = logging.getLogger(__name__)

GENERATORS = ('sinusoid', 'causal', 'idx')
OPTIONS = ('generator', 'kind', 'n', 'size')

IDX_IMAGES_FILE = 'images-idx3-ubyte'
IDX_LABELS_FILE = 'labels-idx1-ubyte'


def digit_like_images(n, size, seed):
    """Noisy size x size images whose bright row encodes the label (labels cycle 0..9)."""
    rng = make_rng(seed)
    labels = np.arange(n) % 10
    images = rng.uniform(0.0, 0.2, size=(n, size, size))
    images[np.arange(n), labels % size, :] += 0.8
    return np.clip(images, 0.0, 1.0), labels


def execute(cfg):
    started = time.monotonic()
    generator = cfg.options['generator']
    n = cfg.options.get('n', 1000)
    seed = cfg.seeds[0]
    out = cfg.out_dir

    if generator == 'sinusoid':
        written = [write_csv(gen_sinusoid(n, seed=seed), out / f"sinusoid_{seed}.csv")]
    elif generator == 'causal':
        kind = cfg.options.get('kind', 'AN')
        if kind not in CAUSAL_KINDS:
            raise InvalidInputError(f"Unknown causal kind {kind!r}; expected one of {CAUSAL_KINDS}")
        pair = gen_causal_pair(kind, n=n, seed=seed)
        table = table_from_arrays(pair.x, pair.y, feature_names=('x',), target_name='y')
        written = [write_csv(table, out / f"causal_{kind}_{seed}.csv")]
    elif generator == 'idx':
        images, labels = digit_like_images(n, cfg.options.get('size', 8), seed)
        written = list(write_idx(images, labels, out / IDX_IMAGES_FILE, out / IDX_LABELS_FILE))
    else:
        raise InvalidInputError(f"Unknown generator {generator!r}; expected one of {GENERATORS}")

    for path in written:
        logger.info(f"Wrote {path}")
        click.echo(str(path))
    write_manifest(cfg, started)
    return written


@click.command('synth')
@click.option('--generator', type=click.Choice(GENERATORS), default='sinusoid', show_default=True)
@click.option('--kind', default='AN', show_default=True, help='Causal generator kind.')
@click.option('--n', 'n_rows', type=int, default=1000, show_default=True)
@click.option('--size', type=int, default=8, show_default=True, help='Image side length for --generator idx.')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', default='results/synth', show_default=True, type=click.Path(file_okay=False))
@handle_errors
def synth(generator, kind, n_rows, size, seed, out):
    """Generate CSV or IDX fixtures."""
    if n_rows < 0:
        raise click.BadParameter('must be nonnegative', param_hint='--n')
    cfg = build_config(
        'synth',
        None,
        OPTIONS,
        seeds=(seed,),
        out=str(Path(out)),
        options={'generator': generator, 'kind': kind, 'n': n_rows, 'size': size},
    )
    execute(cfg)
