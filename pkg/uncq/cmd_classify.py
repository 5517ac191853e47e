# classify: binary classification by the predicted median against a cross-entropy network.
import logging
import time

import click

from uncq.baselines import logistic_scores, train_logistic
from uncq.data import assign_split, binarize_targets, load_csv
from uncq.metrics import accuracy, roc_auc, summarize
from uncq.net import TrainConfig, make_rng
from uncq.runner import (
    build_config,
    data_dir,
    default_jobs,
    handle_errors,
    parse_seeds,
    resolve_dataset,
    run_jobs,
    write_manifest,
    write_records,
    write_summary,
)
from uncq.sqr import SqrTrainConfig, classify_binary_batch, train_sqr

logger = logging.getLogger(__name__)

OPTIONS = ('threshold', 'epochs', 'target_column', 'test_fraction')

HIDDEN = (100, 100)
LEARNING_RATE = 1e-3
WEIGHT_DECAY = 1e-3


def holdout(table, seed, test_fraction):
    perm = make_rng(seed).permutation(table.n_rows)
    n_test = max(1, int(round(test_fraction * table.n_rows)))
    return assign_split(table, perm[n_test:], [], perm[:n_test], seed)


def run_seed(table, seed, cfg):
    data = holdout(table, seed, cfg.options.get('test_fraction', 0.2))
    epochs = cfg.options.get('epochs') or 200
    test_rows = data.rows('test')
    X_test, y_test = data.features[test_rows], data.targets[test_rows].astype(int)

    sqr_model = train_sqr(data, SqrTrainConfig(LEARNING_RATE, WEIGHT_DECAY, epochs, 64, seed), hidden=HIDDEN)
    labels, scores = classify_binary_batch(sqr_model, X_test)
    bce_model = train_logistic(data, TrainConfig(LEARNING_RATE, WEIGHT_DECAY, epochs, 64, seed), hidden=HIDDEN)
    probs = logistic_scores(bce_model, X_test)

    record = {
        'seed': seed,
        'pinball_accuracy': accuracy(y_test, labels),
        'pinball_auc': roc_auc(scores, y_test).auc,
        'bce_accuracy': accuracy(y_test, (probs > 0.5).astype(int)),
        'bce_auc': roc_auc(probs, y_test).auc,
    }
    logger.info(f"seed={seed} pinball acc={record['pinball_accuracy']:.3f} bce acc={record['bce_accuracy']:.3f}")
    return record


def execute(cfg, root=None):
    started = time.monotonic()
    table = load_csv(resolve_dataset(cfg.dataset, root), target_column=cfg.options.get('target_column'))
    table = binarize_targets(table, cfg.options.get('threshold', 10.0))
    records = run_jobs(lambda seed: run_seed(table, seed, cfg), list(cfg.seeds), cfg.jobs)

    summary = {'dataset': cfg.dataset, 'n_repeats': len(records), 'methods': {}}
    rows = []
    for method in ('pinball', 'bce'):
        acc_mean, acc_std = summarize([r[f"{method}_accuracy"] for r in records])
        auc_mean, auc_std = summarize([r[f"{method}_auc"] for r in records])
        summary['methods'][method] = {
            'accuracy_mean': acc_mean, 'accuracy_std': acc_std,
            'auc_mean': auc_mean, 'auc_std': auc_std,
        }
        rows.append({
            'method': method,
            'accuracy': f"{acc_mean:.2f} ± {acc_std:.2f}",
            'roc_auc': f"{auc_mean:.2f} ± {auc_std:.2f}",
        })

    write_records(cfg, 'classify_records', records)
    write_summary(cfg, 'classify_summary', summary, rows)
    write_manifest(cfg, started)
    return summary


@click.command('classify')
@click.option('--dataset', required=True, help='CSV path or name under UNCQ_DATA_DIR (e.g. abalone).')
@click.option('--threshold', type=float, default=10.0, show_default=True, help='Targets above it form class 1.')
@click.option('--target-column')
@click.option('--seeds', default='30', show_default=True)
@click.option('--epochs', type=int, help='Training epochs for both networks (default 200).')
@click.option('--jobs', type=int)
@click.option('--out', default='results/classify', show_default=True, type=click.Path(file_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def classify(ctx, dataset, threshold, target_column, seeds, epochs, jobs, out, config_path):
    """Median-quantile classification versus binary cross-entropy, repeated over seeds."""
    cfg = build_config(
        'classify',
        config_path,
        OPTIONS,
        dataset=dataset,
        seeds=parse_seeds(seeds),
        jobs=default_jobs(ctx, jobs),
        out=out,
        options={'threshold': threshold, 'epochs': epochs, 'target_column': target_column},
    )
    execute(cfg, data_dir(ctx))
