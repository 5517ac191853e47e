# causal: direction-recovery accuracy of pooled pinball scoring on synthetic pairs.
import logging
import time

import click

from uncq.causal import QUANTILE_GRIDS, CausalConfig, causal_benchmark
from uncq.data import CAUSAL_KINDS
from uncq.errors import InvalidInputError
from uncq.runner import build_config, default_jobs, handle_errors, write_manifest, write_records, write_summary
from uncq.sqr import SqrTrainConfig

logger = logging.getLogger(__name__)

OPTIONS = ('kinds', 'ms', 'n_pairs', 'n', 'epochs')


def execute(cfg):
    started = time.monotonic()
    kinds = cfg.options.get('kinds') or ['AN', 'LS', 'MN']
    ms = cfg.options.get('ms') or [1, 3, 5]
    for kind in kinds:
        if kind not in CAUSAL_KINDS:
            raise InvalidInputError(f"Unknown causal kind {kind!r}; expected one of {CAUSAL_KINDS}")
    for m in ms:
        if m not in QUANTILE_GRIDS:
            raise InvalidInputError(f"m must be one of {sorted(QUANTILE_GRIDS)}, got {m}")

    causal_cfg = CausalConfig(train=SqrTrainConfig(
        learning_rate=3e-3,
        epochs=cfg.options.get('epochs') or 100,
        batch_size=64,
        seed=cfg.seeds[0],
    ))
    reports, rows = [], []
    for kind in kinds:
        for m in ms:
            report = causal_benchmark(
                kind,
                n_pairs=cfg.options.get('n_pairs') or 100,
                m=m,
                seed=cfg.seeds[0],
                n=cfg.options.get('n') or 1000,
                cfg=causal_cfg,
                jobs=cfg.jobs,
            )
            reports.append(report.to_dict())
            rows.append({'kind': kind, 'm': m, 'pairs': report.n_pairs, 'accuracy': report.accuracy})

    records = [{'kind': r['kind'], 'm': r['m'], **v} for r in reports for v in r['verdicts']]
    write_records(cfg, 'causal_verdicts', records)
    write_summary(cfg, 'causal_report', reports, rows)
    write_manifest(cfg, started)
    return reports


def _split_list(text, cast):
    if not text:
        return None
    try:
        return [cast(part.strip()) for part in text.split(',') if part.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot parse {text!r}")


@click.command('causal')
@click.option('--kinds', default='AN,LS,MN', show_default=True, help=f"Any of {', '.join(CAUSAL_KINDS)}.")
@click.option('--ms', default='1,3,5', show_default=True, help='Numbers of pooled quantile levels.')
@click.option('--n-pairs', type=int, default=100, show_default=True)
@click.option('--n', 'n_points', type=int, default=1000, show_default=True, help='Points per pair.')
@click.option('--epochs', type=int, help='SQR epochs per direction (default 100).')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--jobs', type=int)
@click.option('--out', default='results/causal', show_default=True, type=click.Path(file_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def causal(ctx, kinds, ms, n_pairs, n_points, epochs, seed, jobs, out, config_path):
    """Causal-direction benchmark over generator kinds and pooled level counts."""
    cfg = build_config(
        'causal',
        config_path,
        OPTIONS,
        seeds=(seed,),
        jobs=default_jobs(ctx, jobs),
        out=out,
        options={
            'kinds': _split_list(kinds, str),
            'ms': _split_list(ms, int),
            'n_pairs': n_pairs,
            'n': n_points,
            'epochs': epochs,
        },
    )
    execute(cfg)
