# verify-theorem1: Monte Carlo check of the Gaussian certificate tail bounds.
import logging
import time

import click
import numpy as np

from uncq.certs import MIN_TAIL_SAMPLES, GaussianSpec, default_theorem_spec, empirical_tail_check
from uncq.errors import InvalidInputError
from uncq.runner import build_config, default_jobs, handle_errors, parse_floats, write_manifest, write_summary
from uncq.store import load_json

logger = logging.getLogger(__name__)

OPTIONS = ('ts', 'n_samples', 'spec', 'self_test')

# Multiplier applied to the bounds in self-test mode; the harness must then report FAIL.
SELF_TEST_SCALE = 0.01


def load_gaussian_spec(path):
    """
    Spec file: {"cov": [[...]], "out_cov": [[...]], "k": 2, "mean": [...], "out_mean": [...]}.

    Means are optional and default to zero.
    """
    doc = load_json(path)
    try:
        return GaussianSpec.from_covariances(
            np.asarray(doc['cov'], dtype=float),
            np.asarray(doc['out_cov'], dtype=float),
            int(doc['k']),
            mean=doc.get('mean'),
            out_mean=doc.get('out_mean'),
        )
    except KeyError as e:
        raise InvalidInputError(f"Gaussian spec {path} is missing {e}")
    except ValueError as e:
        raise InvalidInputError(f"Invalid covariance in {path}: {e}")


def execute(cfg):
    started = time.monotonic()
    spec_path = cfg.options.get('spec')
    spec = load_gaussian_spec(spec_path) if spec_path else default_theorem_spec(cfg.seeds[0])
    scale = SELF_TEST_SCALE if cfg.options.get('self_test') else 1.0
    report = empirical_tail_check(
        spec,
        spec.certificate_matrix(),
        cfg.options['ts'],
        n_samples=cfg.options.get('n_samples') or 1_000_000,
        seed=cfg.seeds[0],
        jobs=cfg.jobs,
        bound_scale=scale,
    )

    rows = [
        {
            'domain': r['domain'],
            't': r['t'],
            'freq': r['empirical_freq'],
            'bound': r['bound'],
            'result': 'PASS' if r['satisfied'] else 'FAIL',
        }
        for r in report.rows
    ]
    summary = report.to_dict()
    summary['mean_ratio'] = report.out_mean / report.in_mean if report.in_mean > 0 else None
    write_summary(cfg, 'theorem_report', summary, rows)
    click.echo(f"in-domain mean {report.in_mean:.4f}, out-domain mean {report.out_mean:.4f}")
    click.echo('PASS' if report.passed else 'FAIL')
    write_manifest(cfg, started)
    return summary


@click.command('verify-theorem1')
@click.option('--ts', default='0.5,1,2', show_default=True, help='Comma separated deviation levels t.')
@click.option('--n-samples', type=int, default=1_000_000, show_default=True)
@click.option('--spec', 'spec_path', type=click.Path(dir_okay=False), help='JSON file with cov, out_cov and k.')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--self-test', is_flag=True, help=f'Scale every bound by {SELF_TEST_SCALE}; expected to FAIL.')
@click.option('--jobs', type=int)
@click.option('--out', default='results/theorem', show_default=True, type=click.Path(file_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def verify_theorem1(ctx, ts, n_samples, spec_path, seed, self_test, jobs, out, config_path):
    """Compare Monte Carlo score exceedances with the in/out-domain tail bounds."""
    if n_samples < MIN_TAIL_SAMPLES:
        raise click.BadParameter(f"must be at least {MIN_TAIL_SAMPLES}", param_hint='--n-samples')
    cfg = build_config(
        'verify-theorem1',
        config_path,
        OPTIONS,
        seeds=(seed,),
        jobs=default_jobs(ctx, jobs),
        out=out,
        options={'ts': list(parse_floats(ts, '--ts')), 'n_samples': n_samples, 'spec': spec_path, 'self_test': self_test},
    )
    if any(t <= 0 for t in cfg.options['ts']):
        raise click.BadParameter('every t must be positive', param_hint='--ts')
    execute(cfg)
