# ood-eval: out-of-distribution detection on an in/out class split of an IDX image set.
import logging
import time

import click
import numpy as np

from uncq.baselines import SoftmaxScorer, oracle_scores, random_scores, softmax_scores
from uncq.certs import CertTrainConfig, FeatureExtractor, distance_scores, fit_pca_scorer, train_certificates
from uncq.data import ClassSplitSpec, LabeledTable, class_split, load_idx
from uncq.errors import InvalidInputError
from uncq.metrics import roc_auc, summarize
from uncq.net import TrainConfig, forward, make_rng, train_classifier
from uncq.runner import (
    build_config,
    data_dir,
    default_jobs,
    expand_grid,
    handle_errors,
    parse_seeds,
    resolve_dataset,
    run_jobs,
    write_manifest,
    write_records,
    write_summary,
)

logger = logging.getLogger(__name__)

OPTIONS = ('labels', 'out_images', 'out_labels', 'in_classes', 'max_rows', 'epochs', 'hidden')

CERT_KS = (100, 1000)
PCA_KS = (1, 10, 100)
CERT_EPOCHS = (10, 100)
CERT_LAMBDAS = (1.0, 10.0)
DIST_PERCENTILES = (0, 1, 10, 50)
TEMPERATURES = (1.0, 2.0, 10.0)

SCORER_ORDER = (
    'ocs', 'unregularized ocs', 'pca', 'distance',
    'entropy', 'largest', 'functional', 'geometrical', 'random', 'oracle',
)


def capped_ks(h, n_train=None):
    """Certificate counts capped at half the feature dimension and at the training rows."""
    cap = max(1, h // 2)
    if n_train is not None:
        cap = max(1, min(cap, n_train))
    return sorted({min(k, cap) for k in CERT_KS})


def pca_ks(h):
    """PCA component counts capped at the feature dimension."""
    return sorted({min(k, h) for k in PCA_KS})


def scorer_grid(h, n_train=None, methods=None):
    """(scorer name, config) pairs evaluated for every seed, optionally restricted to ``methods``."""
    ks = capped_ks(h, n_train)
    grid = [('ocs', c) for c in expand_grid(k=ks, epochs=CERT_EPOCHS, lam=CERT_LAMBDAS)]
    grid += [('unregularized ocs', c) for c in expand_grid(k=ks, epochs=CERT_EPOCHS, lam=(0.0,))]
    grid += [('pca', c) for c in expand_grid(k=pca_ks(h))]
    grid += [('distance', c) for c in expand_grid(percentile=DIST_PERCENTILES)]
    grid += [('entropy', c) for c in expand_grid(temperature=TEMPERATURES)]
    for kind in ('largest', 'functional', 'geometrical'):
        grid += [(kind, c) for c in expand_grid(use_logits=(False, True), temperature=TEMPERATURES)]
    grid += [('random', {}), ('oracle', {})]
    if methods:
        grid = [(name, c) for name, c in grid if name in methods]
    return grid


def _subsample(table, max_rows, rng):
    if not max_rows or table.n_rows <= max_rows:
        return table
    rows = np.sort(rng.choice(table.n_rows, size=max_rows, replace=False))
    return LabeledTable(table.features[rows], table.targets[rows], table.feature_names, table.target_name, table.task)


def prepare_seed(table, cross_pool, seed, cfg):
    """Train the in-domain classifier and compute everything the scorers need for one seed."""
    labels = table.targets.astype(int)
    in_classes = cfg.options.get('in_classes')
    if in_classes:
        spec = ClassSplitSpec(in_classes, sorted(set(labels.tolist()) - set(in_classes)), seed)
    else:
        spec = ClassSplitSpec.random(labels, seed)
    in_train, in_test, out_test = class_split(table, spec, balance=True)
    if cross_pool is not None:
        # out-domain rows drawn from the second image set, one per in-domain test row
        rows = make_rng(seed).choice(cross_pool.n_rows, size=min(in_test.n_rows, cross_pool.n_rows), replace=False)
        out_features = cross_pool.features[rows]
    else:
        out_features = out_test.features
    if in_train.n_features != out_features.shape[1]:
        raise InvalidInputError("Out-domain images do not match the in-domain image size")

    classifier = train_classifier(
        in_train.features,
        in_train.targets.astype(int),
        len(spec.in_classes),
        TrainConfig(learning_rate=1e-3, epochs=cfg.options.get('epochs') or 10, batch_size=128, seed=seed),
        hidden=tuple(cfg.options.get('hidden') or (256, 256)),
    )
    featurizer = FeatureExtractor.from_classifier(classifier)
    # pool rows: in-domain test first, then out-domain
    pool = np.vstack([in_test.features, out_features])
    return {
        'seed': seed,
        'in_classes': list(spec.in_classes),
        'train_features': featurizer.extract(in_train.features),
        'pool_features': featurizer.extract(pool),
        'pool_logits': forward(classifier, pool),
        'final_weights': classifier.weights[-1],
        'is_out': np.concatenate([np.zeros(in_test.n_rows, dtype=int), np.ones(len(out_features), dtype=int)]),
    }


def score_pool(name, config, prepared):
    """Out-of-distribution scores of the evaluation pool for one scorer configuration."""
    seed = prepared['seed']
    train_features = prepared['train_features']
    pool = prepared['pool_features']
    if name in ('ocs', 'unregularized ocs'):
        certs = train_certificates(
            train_features, config['k'], config['lam'],
            cfg=CertTrainConfig(epochs=config['epochs'], seed=seed),
        )
        return certs.score(pool)
    if name == 'pca':
        return fit_pca_scorer(train_features, config['k']).score(pool)
    if name == 'distance':
        return distance_scores(train_features, pool, percentile=config['percentile'] or None)
    if name == 'random':
        return random_scores(make_rng(seed), len(pool))
    if name == 'oracle':
        return oracle_scores(pool, prepared['is_out'], seed=seed)
    scorer = SoftmaxScorer(name, config['temperature'], config.get('use_logits', False))
    return softmax_scores(scorer, prepared['pool_logits'], prepared['final_weights'])


def execute(cfg, root=None):
    started = time.monotonic()
    # fail on unknown scorer names before loading images
    _method_list(cfg.method)
    images = resolve_dataset(cfg.dataset, root, suffixes=('',))
    labels = resolve_dataset(cfg.options.get('labels'), root, suffixes=('',))
    rng = make_rng(cfg.seeds[0])
    table = _subsample(load_idx(images, labels), cfg.options.get('max_rows'), rng)
    if len(np.unique(table.targets)) != 10:
        raise InvalidInputError(f"ood-eval needs 10-class data, found {len(np.unique(table.targets))} classes")

    # optional second image set replaces the held-out classes as the out-domain pool
    cross_pool = None
    if cfg.options.get('out_images'):
        cross_pool = load_idx(
            resolve_dataset(cfg.options['out_images'], root, suffixes=('',)),
            resolve_dataset(cfg.options.get('out_labels'), root, suffixes=('',)),
        )

    # one classifier per seed, then every scorer configuration against its features
    records = []
    for seed in cfg.seeds:
        prepared = prepare_seed(table, cross_pool, seed, cfg)
        n_train, h = prepared['train_features'].shape
        grid = scorer_grid(h, n_train, _method_list(cfg.method))

        def job(spec):
            name, config = spec
            auc = roc_auc(score_pool(name, config, prepared), prepared['is_out']).auc
            logger.info(f"seed={seed} {name} {config}: AUC {auc:.4f}")
            return {'dataset': cfg.dataset, 'seed': seed, 'scorer': name, 'config': config, 'auc': auc}

        records += run_jobs(job, grid, cfg.jobs)

    summary = {'dataset': cfg.dataset, 'cross_dataset': cfg.options.get('out_images'), 'scorers': {}}
    rows = []
    for name in SCORER_ORDER:
        aucs = [r['auc'] for r in records if r['scorer'] == name]
        if not aucs:
            continue
        mean, std = summarize(aucs)
        summary['scorers'][name] = {'auc_mean': mean, 'auc_std': std, 'n_configs': len(aucs)}
        rows.append({'scorer': name, 'auc': f"{mean:.2f} ± {std:.2f}", 'configs': len(aucs)})

    write_records(cfg, 'ood_records', records)
    write_summary(cfg, 'ood_summary', summary, rows)
    write_manifest(cfg, started)
    return summary


def _method_list(text):
    """Scorer names from "ocs,pca"; None or "all" keeps every scorer."""
    if not text or text == 'all':
        return None
    names = [name.strip() for name in text.split(',') if name.strip()]
    unknown = sorted(set(names) - set(SCORER_ORDER))
    if unknown:
        raise InvalidInputError(f"Unknown scorers {unknown}; expected names from {list(SCORER_ORDER)}")
    return names


def _class_list(text):
    if not text:
        return None
    try:
        return [int(c) for c in text.split(',') if c.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma separated class labels, got {text!r}")


@click.command('ood-eval')
@click.option('--dataset', 'images', required=True, help='IDX images file (path or name under UNCQ_DATA_DIR).')
@click.option('--labels', required=True, help='IDX labels file matching --dataset.')
@click.option('--out-images', help='Second IDX images file used as the out-domain pool.')
@click.option('--out-labels', help='Labels for --out-images.')
@click.option('--method', default='all', show_default=True,
              help='Comma separated scorers to evaluate, e.g. "ocs,pca,entropy".')
@click.option('--in-classes', help='In-domain classes, e.g. "0,1,2,3,4"; random 5/5 split per seed when omitted.')
@click.option('--seeds', default='1', show_default=True)
@click.option('--max-rows', type=int, help='Subsample the image set to this many rows.')
@click.option('--epochs', type=int, help='Classifier epochs (default 10).')
@click.option('--jobs', type=int)
@click.option('--out', default='results/ood', show_default=True, type=click.Path(file_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def ood_eval(ctx, images, labels, out_images, out_labels, method, in_classes, seeds, max_rows, epochs, jobs, out, config_path):
    """Out-of-distribution detection AUCs for every scorer configuration."""
    if out_images and not out_labels:
        raise click.UsageError('--out-images needs --out-labels')
    cfg = build_config(
        'ood-eval',
        config_path,
        OPTIONS,
        dataset=images,
        method=method,
        seeds=parse_seeds(seeds),
        jobs=default_jobs(ctx, jobs),
        out=out,
        options={
            'labels': labels,
            'out_images': out_images,
            'out_labels': out_labels,
            'in_classes': _class_list(in_classes),
            'max_rows': max_rows,
            'epochs': epochs,
        },
    )
    execute(cfg, data_dir(ctx))
