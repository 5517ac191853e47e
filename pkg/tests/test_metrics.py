import numpy as np
import pytest

from uncq.errors import InvalidInputError
from uncq.metrics import (
    NONE_SENTINEL,
    accuracy,
    evaluate_intervals,
    mpiw,
    picp,
    roc_auc,
    select_calibrated,
    summarize,
)
from uncq.net import make_rng
from uncq.sqr import IntervalSet, PredictionInterval


def intervals(*pairs, alpha=0.05):
    lower, upper = zip(*pairs)
    return IntervalSet(np.array(lower, dtype=float), np.array(upper, dtype=float), alpha)


# =======================================
# PICP and MPIW
# =======================================

def test_picp_counts_closed_intervals():
    ivs = intervals((0, 1), (0, 1), (0, 1), (0, 1))
    assert picp(ivs, [0.0, 1.0, 0.5, 1.5]) == 0.75


def test_picp_accepts_interval_sequence():
    ivs = [PredictionInterval(0.0, 2.0, 0.1), PredictionInterval(5.0, 6.0, 0.1)]
    assert picp(ivs, [1.0, 1.0]) == 0.5


def test_mpiw_is_range_normalized():
    ivs = intervals((0, 1), (2, 5))
    assert mpiw(ivs, 4.0) == pytest.approx(0.5)


def test_metric_inputs_are_validated():
    with pytest.raises(InvalidInputError):
        picp(intervals((0, 1)), [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        mpiw(intervals((0, 1)), 0.0)
    with pytest.raises(InvalidInputError):
        picp(IntervalSet(np.array([]), np.array([]), 0.05), [])


def test_evaluate_intervals_carries_alpha():
    result = evaluate_intervals(intervals((0, 2), (0, 2), alpha=0.1), [1.0, 3.0], 2.0)
    assert result.to_dict() == {'picp': 0.5, 'mpiw': 1.0, 'n': 2, 'alpha': 0.1}


def test_summarize_uses_population_std():
    assert summarize([1.0, 3.0]) == (2.0, 1.0)
    with pytest.raises(InvalidInputError):
        summarize([])


# =======================================
# Calibrated selection
# =======================================

def record(val_picp, test_picp, test_mpiw):
    return {'val_picp': val_picp, 'test_picp': test_picp, 'test_mpiw': test_mpiw}


def test_no_survivor_gives_none():
    assert select_calibrated([record(0.80, 0.9, 0.1), record(0.99, 0.9, 0.2)]) == NONE_SENTINEL


def test_band_edges_are_inclusive():
    result = select_calibrated([record(0.925, 0.95, 0.3), record(0.975, 0.93, 0.5)])
    assert result['n_survivors'] == 2


def test_mixed_set_aggregates_survivors_only():
    results = [
        record(0.95, 0.96, 0.20),
        record(0.93, 0.92, 0.40),
        record(0.50, 0.10, 9.00),
    ]
    summary = select_calibrated(results)
    assert summary['n_survivors'] == 2
    assert summary['n_total'] == 3
    assert summary['picp_mean'] == pytest.approx(0.94)
    assert summary['picp_std'] == pytest.approx(0.02)
    assert summary['mpiw_mean'] == pytest.approx(0.30)
    assert summary['mpiw_std'] == pytest.approx(0.10)


def test_select_calibrated_rejects_empty():
    with pytest.raises(InvalidInputError):
        select_calibrated([])


# =======================================
# ROC AUC
# =======================================

@pytest.mark.parametrize('scores, labels, expected', [
    ([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], 1.0),
    ([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1], 0.0),
    ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
    ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75),
])
def test_auc_examples(scores, labels, expected):
    assert roc_auc(scores, labels).auc == pytest.approx(expected)


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def test_auc_matches_pairwise_count():
    r = make_rng(0)
    for _ in range(200):
        n = int(r.integers(2, 30))
        labels = r.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        # coarse grid so ties occur
        scores = np.round(r.uniform(0, 1, n), 1)
        assert roc_auc(scores, labels).auc == pytest.approx(brute_force_auc(scores, labels))


def test_auc_invariant_to_monotone_transform():
    r = make_rng(1)
    scores = r.standard_normal(100)
    labels = r.integers(0, 2, 100)
    labels[:2] = (0, 1)
    assert roc_auc(np.exp(3 * scores), labels).auc == pytest.approx(roc_auc(scores, labels).auc)


def test_auc_of_flipped_labels_is_complement():
    r = make_rng(2)
    scores = r.standard_normal(60)
    labels = r.integers(0, 2, 60)
    labels[:2] = (0, 1)
    assert roc_auc(scores, labels).auc + roc_auc(scores, 1 - labels).auc == pytest.approx(1.0)


def test_auc_counts_classes():
    result = roc_auc([0.1, 0.2, 0.3], [1, 0, 0])
    assert (result.n_pos, result.n_neg) == (1, 2)


def test_auc_needs_both_classes():
    with pytest.raises(InvalidInputError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(InvalidInputError):
        roc_auc([0.1, 0.2], [1])


def test_accuracy():
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    with pytest.raises(InvalidInputError):
        accuracy([], [])
