# pi-eval: prediction-interval calibration of SQR and the conditional-Gaussian baseline.
import logging
import time

import click

from uncq.baselines import gaussian_intervals, train_gaussian
from uncq.data import load_csv, split
from uncq.metrics import NONE_SENTINEL, picp, mpiw, select_calibrated
from uncq.runner import (
    build_config,
    data_dir,
    default_jobs,
    handle_errors,
    optimizer_grid,
    parse_grid,
    parse_grid_point,
    parse_seeds,
    resolve_dataset,
    run_jobs,
    write_manifest,
    write_records,
    write_summary,
)
from uncq.sqr import SqrTrainConfig, prediction_intervals, train_sqr

logger = logging.getLogger(__name__)

METHODS = ('sqr', 'gaussian')
OPTIONS = ('epochs', 'batch_size', 'hidden', 'target_column', 'mpiw_norm', 'grid')
MPIW_NORMS = ('range', 'std')

# train / validation / test
SPLIT_FRACTIONS = (0.7, 0.15, 0.15)


def _intervals(method, model, X, alpha):
    if method == 'sqr':
        return prediction_intervals(model, X, alpha)
    return gaussian_intervals(model, X, alpha)


def _width_scale(table, norm):
    if norm == 'std':
        return table.target_stats.std
    return table.target_range


def evaluate_config(table, method, point, seed, cfg):
    """Train one (method, grid point, seed) and score its validation/test intervals."""
    train_cfg = SqrTrainConfig(
        learning_rate=point['learning_rate'],
        weight_decay=point['weight_decay'],
        epochs=cfg.epochs,
        batch_size=cfg.options.get('batch_size', 64),
        seed=seed,
    )
    hidden = tuple(cfg.options.get('hidden') or (64, 64))
    trainer = train_sqr if method == 'sqr' else train_gaussian
    model = trainer(table, train_cfg, hidden=hidden)

    val_rows, test_rows = table.rows('val'), table.rows('test')
    test_intervals = _intervals(method, model, table.features[test_rows], cfg.alpha)
    record = {
        'dataset': cfg.dataset,
        'method': method,
        'seed': seed,
        'config': train_cfg.to_dict(),
        'test_picp': picp(test_intervals, table.targets[test_rows]),
        'test_mpiw': mpiw(test_intervals, _width_scale(table, cfg.options.get('mpiw_norm'))),
        'n_repaired': test_intervals.n_repaired,
    }
    if len(val_rows):
        val_intervals = _intervals(method, model, table.features[val_rows], cfg.alpha)
        record['val_picp'] = picp(val_intervals, table.targets[val_rows])
    else:
        record['val_picp'] = float('nan')
    logger.info(f"{method} seed={seed} lr={point['learning_rate']} wd={point['weight_decay']}: val_picp={record['val_picp']:.3f} test_picp={record['test_picp']:.3f}")
    return record


def execute(cfg, root=None):
    """
    Run every (method, grid point, seed) job and apply the validation-band selection.

    Returns:
        dict: summary per method; "none" when no configuration is calibrated.
    """
    started = time.monotonic()
    path = resolve_dataset(cfg.dataset, root)
    table = load_csv(path, target_column=cfg.options.get('target_column'))
    splits = {seed: split(table, SPLIT_FRACTIONS, seed) for seed in cfg.seeds}
    methods = METHODS if cfg.method in (None, 'both') else (cfg.method,)
    grid = optimizer_grid(cfg.grid_point, cfg.options.get('grid'))

    specs = [(method, point, seed) for method in methods for point in grid for seed in cfg.seeds]
    records = run_jobs(lambda spec: evaluate_config(splits[spec[2]], *spec, cfg), specs, cfg.jobs)

    summary = {'dataset': cfg.dataset, 'alpha': cfg.alpha, 'methods': {}}
    rows = []
    for method in methods:
        selected = [r for r in records if r['method'] == method]
        result = select_calibrated(selected) if selected else NONE_SENTINEL
        summary['methods'][method] = result
        if result == NONE_SENTINEL:
            rows.append({'method': method, 'picp': NONE_SENTINEL, 'mpiw': NONE_SENTINEL, 'survivors': 0})
        else:
            rows.append({
                'method': method,
                'picp': f"{result['picp_mean']:.2f} ± {result['picp_std']:.2f}",
                'mpiw': f"{result['mpiw_mean']:.2f} ± {result['mpiw_std']:.2f}",
                'survivors': result['n_survivors'],
            })

    write_records(cfg, 'pi_records', records)
    write_summary(cfg, 'pi_summary', summary, rows)
    write_manifest(cfg, started)
    return summary


@click.command('pi-eval')
@click.option('--dataset', help='CSV path, or a name under UNCQ_DATA_DIR (e.g. concrete).')
@click.option('--method', type=click.Choice(['sqr', 'gaussian', 'both']), default='both', show_default=True)
@click.option('--alpha', type=float, default=0.05, show_default=True, help='Significance level of the intervals.')
@click.option('--seeds', default='5', show_default=True, help='Seed count, or a comma separated list.')
@click.option('--grid', 'grid_axes', help='Override grid axes, e.g. "lr=1e-2|1e-3,wd=0|1e-2".')
@click.option('--grid-point', help='Single configuration, e.g. "lr=1e-3,wd=0".')
@click.option('--jobs', type=int, help='Parallel jobs (defaults to UNCQ_JOBS).')
@click.option('--fast/--full', default=True, show_default=True, help='500 instead of 5000 epochs.')
@click.option('--epochs', type=int, help='Override the epoch count.')
@click.option('--batch-size', type=int)
@click.option('--target-column')
@click.option('--mpiw-norm', type=click.Choice(MPIW_NORMS), default='range', show_default=True,
              help='Normalize interval widths by the training target range or stddev.')
@click.option('--out', default='results/pi', show_default=True, type=click.Path(file_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Re-run a saved config or manifest.')
@click.pass_context
@handle_errors
def pi_eval(ctx, dataset, method, alpha, seeds, grid_axes, grid_point, jobs, fast, epochs, batch_size, target_column, mpiw_norm, out,
            config_path):
    """Evaluate 95% prediction intervals over seeds and the optimizer grid."""
    if grid_axes and grid_point:
        raise click.UsageError('--grid and --grid-point are mutually exclusive')
    allowed = {'learning_rate', 'weight_decay'}
    axes = parse_grid(grid_axes, allowed)
    cfg = build_config(
        'pi-eval',
        config_path,
        OPTIONS,
        dataset=dataset,
        method=method,
        alpha=alpha,
        seeds=parse_seeds(seeds),
        grid_point=parse_grid_point(grid_point, allowed),
        jobs=default_jobs(ctx, jobs),
        fast=fast,
        out=out,
        options={
            'epochs': epochs,
            'batch_size': batch_size,
            'target_column': target_column,
            'mpiw_norm': mpiw_norm,
            'grid': {k: list(v) for k, v in axes.items()} if axes else None,
        },
    )
    if not cfg.dataset:
        raise click.UsageError('--dataset is required')
    execute(cfg, data_dir(ctx))
