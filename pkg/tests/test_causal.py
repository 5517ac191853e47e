import numpy as np
import pytest

from uncq.causal import (
    X_TO_Y,
    Y_TO_X,
    CausalConfig,
    causal_benchmark,
    causal_score,
)
from uncq.errors import InvalidInputError, UndecidedError
from uncq.net import make_rng
from uncq.sqr import SqrTrainConfig

QUICK = CausalConfig(train=SqrTrainConfig(learning_rate=1e-2, epochs=3, batch_size=64, seed=0), hidden=(8,))


def noisy_pair(n=200, seed=0):
    r = make_rng(seed)
    x = r.standard_normal(n)
    return x, x ** 3 + 0.1 * r.standard_normal(n)


def test_swapping_inputs_swaps_scores():
    x, y = noisy_pair()
    forward = causal_score(x, y, m=3, cfg=QUICK)
    backward = causal_score(y, x, m=3, cfg=QUICK)
    assert forward.score_xy == backward.score_yx
    assert forward.score_yx == backward.score_xy


def test_identical_variables_tie_to_reverse_direction():
    x = make_rng(1).standard_normal(150)
    verdict = causal_score(x, x.copy(), m=1, cfg=QUICK)
    assert verdict.score_xy == verdict.score_yx
    assert verdict.direction == Y_TO_X
    assert verdict.low_confidence


def test_constant_variable_is_undecidable():
    with pytest.raises(UndecidedError):
        causal_score(np.ones(120), np.arange(120.0), cfg=QUICK)


def test_score_validation():
    x, y = noisy_pair()
    with pytest.raises(InvalidInputError):
        causal_score(x, y, m=2, cfg=QUICK)
    with pytest.raises(InvalidInputError):
        causal_score(x[:99], y[:99], cfg=QUICK)
    with pytest.raises(InvalidInputError):
        causal_score(x, y[:-1], cfg=QUICK)
    with pytest.raises(InvalidInputError):
        CausalConfig(holdout_fraction=1.0)


def test_verdict_record_fields():
    x, y = noisy_pair(seed=2)
    doc = causal_score(x, y, m=5, cfg=QUICK).to_dict()
    assert set(doc) == {'score_xy', 'score_yx', 'direction', 'm', 'low_confidence'}
    assert doc['m'] == 5
    assert doc['direction'] in (X_TO_Y, Y_TO_X)


def test_benchmark_with_oracle_scorer():
    report = causal_benchmark('AN', n_pairs=20, n=100, scorer=lambda a, b, m: X_TO_Y, randomize_orientation=False)
    assert report.accuracy == 1.0
    assert report.n_pairs == 20
    assert report.generator == 'stand-in'


def test_benchmark_with_inverted_scorer():
    report = causal_benchmark('LS', n_pairs=20, n=100, scorer=lambda a, b, m: Y_TO_X, randomize_orientation=False)
    assert report.accuracy == 0.0


def test_benchmark_orientation_is_randomized():
    report = causal_benchmark('MN', n_pairs=40, n=100, scorer=lambda a, b, m: X_TO_Y, seed=3, jobs=4)
    truths = {v['true_direction'] for v in report.verdicts}
    assert truths == {X_TO_Y, Y_TO_X}
    assert 0.0 < report.accuracy < 1.0


def test_benchmark_counts_undecided_pairs_as_wrong():
    def undecided(a, b, m):
        raise UndecidedError('constant')

    report = causal_benchmark('AN', n_pairs=20, n=100, scorer=undecided)
    assert report.accuracy == 0.0
    assert all(v['direction'] is None for v in report.verdicts)


def test_benchmark_validation():
    with pytest.raises(InvalidInputError):
        causal_benchmark('AN', n_pairs=5, scorer=lambda a, b, m: X_TO_Y)
    with pytest.raises(InvalidInputError):
        causal_benchmark('ZZ', scorer=lambda a, b, m: X_TO_Y)


@pytest.mark.slow
def test_additive_noise_pairs_mostly_recovered():
    report = causal_benchmark('AN', n_pairs=100, m=3, seed=0, n=1000, jobs=4)
    assert report.accuracy >= 0.90


@pytest.mark.slow
def test_more_levels_do_not_hurt_on_sigmoid_pairs():
    single = causal_benchmark('AN-S', n_pairs=40, m=1, seed=1, n=1000, jobs=4)
    pooled = causal_benchmark('AN-S', n_pairs=40, m=3, seed=1, n=1000, jobs=4)
    assert pooled.accuracy >= single.accuracy


@pytest.mark.slow
def test_verdict_survives_positive_affine_maps():
    x, y = noisy_pair(n=500, seed=4)
    cfg = CausalConfig(train=SqrTrainConfig(learning_rate=3e-3, epochs=30, batch_size=64, seed=0), hidden=(16, 16))
    reference = causal_score(x, y, m=3, cfg=cfg).direction
    r = make_rng(11)
    for i in range(20):
        a_x, a_y = r.uniform(0.1, 10.0, size=2)
        b_x, b_y = r.uniform(-5.0, 5.0, size=2)
        mapped_x = a_x * x + b_x if i % 3 != 1 else x
        mapped_y = a_y * y + b_y if i % 3 != 0 else y
        assert causal_score(mapped_x, mapped_y, m=3, cfg=cfg).direction == reference


@pytest.mark.slow
def test_multiplicative_noise_pairs_recovered():
    report = causal_benchmark('MN', n_pairs=40, m=3, seed=2, n=1000, jobs=4)
    assert report.accuracy >= 0.85
