import numpy as np
import pytest

from uncq.baselines import (
    GaussianHeadNet,
    SoftmaxScorer,
    binary_cross_entropy,
    gaussian_interval,
    gaussian_intervals,
    gaussian_nll_objective,
    interval_from_moments,
    logistic_scores,
    normal_quantile,
    oracle_score,
    oracle_scores,
    predict_moments,
    random_score,
    random_scores,
    softmax_score,
    softmax_scores,
    train_gaussian,
    train_logistic,
)
from uncq.data import binarize_targets, split, table_from_arrays
from uncq.errors import InvalidInputError
from uncq.metrics import accuracy, roc_auc
from uncq.net import TrainConfig, forward, init_mlp, make_rng


# =======================================
# Softmax scores
# =======================================

def test_entropy_of_uniform_softmax():
    assert softmax_score(SoftmaxScorer('entropy'), np.zeros(5)) == pytest.approx(np.log(5))


def test_entropy_of_known_distribution():
    logits = np.log([0.7, 0.2, 0.1])
    assert softmax_score(SoftmaxScorer('entropy'), logits) == pytest.approx(0.8018, abs=1e-4)


@pytest.mark.parametrize('kind, expected', [
    ('entropy', 0.0),
    ('largest', 0.0),
    ('functional', -1.0),
    ('geometrical', -1.0),
])
def test_confident_logits_score_lowest(kind, expected):
    assert softmax_score(SoftmaxScorer(kind), [200.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-9)


def test_largest_of_uniform():
    assert softmax_score(SoftmaxScorer('largest'), np.zeros(4)) == pytest.approx(0.75)


@pytest.mark.parametrize('kind', ['entropy', 'largest', 'functional', 'geometrical'])
def test_scores_are_shift_invariant(kind):
    logits = make_rng(0).standard_normal((10, 4))
    scorer = SoftmaxScorer(kind)
    assert softmax_scores(scorer, logits + 7.5) == pytest.approx(softmax_scores(scorer, logits))


def test_temperature_flattens_probabilities():
    logits = np.array([[3.0, 1.0, 0.0]])
    cold = softmax_scores(SoftmaxScorer('entropy', temperature=1.0), logits)
    warm = softmax_scores(SoftmaxScorer('entropy', temperature=10.0), logits)
    assert warm[0] > cold[0]


@pytest.mark.parametrize('kind, expected', [('largest', -3.0), ('functional', -2.0), ('geometrical', -2.0)])
def test_logit_scores_differ_from_probability_scores(kind, expected):
    logits = np.array([[3.0, 1.0, 0.0], [0.5, 0.4, -1.0]])
    on_logits = softmax_scores(SoftmaxScorer(kind, use_logits=True), logits)
    on_probs = softmax_scores(SoftmaxScorer(kind, use_logits=False), logits)
    assert on_logits[0] == pytest.approx(expected)
    assert not np.allclose(on_logits, on_probs)


def test_logit_scores_use_temperature():
    scorer = SoftmaxScorer('largest', temperature=2.0, use_logits=True)
    assert softmax_score(scorer, [4.0, 0.0]) == pytest.approx(-2.0)


def test_geometrical_margin_normalized_by_weight_rows():
    weights = np.array([[2.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    scorer = SoftmaxScorer('geometrical', use_logits=True)
    assert softmax_score(scorer, [3.0, 0.0, 1.0], weights) == pytest.approx(-2.0 / np.sqrt(2.0))
    assert softmax_score(scorer, [3.0, 0.0, 1.0]) == pytest.approx(-2.0)


def test_softmax_scorer_validation():
    with pytest.raises(InvalidInputError):
        SoftmaxScorer('margin')
    with pytest.raises(InvalidInputError):
        SoftmaxScorer('entropy', temperature=0.0)
    with pytest.raises(InvalidInputError):
        softmax_scores(SoftmaxScorer('entropy'), np.zeros((3, 1)))


# =======================================
# Conditional Gaussian
# =======================================

def test_normal_quantile():
    assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)
    with pytest.raises(InvalidInputError):
        normal_quantile(1.0)


def test_zero_sigma_interval_collapses():
    intervals = interval_from_moments([1.0, 2.0], [0.0, 0.0], 0.05)
    assert np.array_equal(intervals.lower, intervals.upper)
    assert intervals.lower == pytest.approx([1.0, 2.0])


def test_doubling_sigma_doubles_width():
    narrow = interval_from_moments([0.0], [1.0], 0.1)
    wide = interval_from_moments([0.0], [2.0], 0.1)
    assert wide.widths[0] == pytest.approx(2 * narrow.widths[0])
    assert narrow.widths[0] == pytest.approx(2 * normal_quantile(0.95))


def test_nll_gradient_matches_finite_differences(relative_error):
    r = make_rng(1)
    net = init_mlp([2, 2], 'relu', r)
    X = r.standard_normal((5, 2))
    y = r.standard_normal(5)
    trace, _, grad = gaussian_nll_objective(net, X, y)
    outputs = trace.output
    step = 1e-6

    def loss_at(out):
        mu, log_var = out[:, 0], out[:, 1]
        return np.mean(0.5 * (log_var + (y - mu) ** 2 * np.exp(-log_var)))

    for idx in np.ndindex(outputs.shape):
        up, down = outputs.copy(), outputs.copy()
        up[idx] += step
        down[idx] -= step
        numeric = (loss_at(up) - loss_at(down)) / (2 * step)
        assert relative_error(grad[idx], numeric) < 1e-4


def test_moments_in_target_units():
    net = init_mlp([1, 2], 'relu', make_rng(0))
    net = net.with_params([np.zeros((2, 1)), np.array([1.0, np.log(4.0)])])
    model = GaussianHeadNet(net, 1, target_mean=5.0, target_std=3.0)
    mu, sigma = predict_moments(model, np.array([0.0]))
    assert mu == pytest.approx([8.0])
    assert sigma == pytest.approx([6.0])

    interval = gaussian_interval(model, np.array([0.0]), 0.05)
    assert interval.lower == pytest.approx(8.0 - 1.959964 * 6.0, abs=1e-5)
    with pytest.raises(InvalidInputError):
        gaussian_intervals(model, np.zeros((1, 1)), 1.5)


def test_train_gaussian_gives_positive_sigma(sinusoid_table):
    model = train_gaussian(sinusoid_table, TrainConfig(epochs=3, seed=0), hidden=(16,))
    X_test, _ = sinusoid_table.arrays('test', standardized=False)
    mu, sigma = predict_moments(model, X_test)
    assert np.all(np.isfinite(mu))
    assert np.all(sigma > 0)


@pytest.mark.slow
def test_gaussian_sigma_matches_homoskedastic_noise(gaussian_noise_table):
    model = train_gaussian(gaussian_noise_table, TrainConfig(learning_rate=1e-3, epochs=30, seed=0), hidden=(32, 32))
    X_test, _ = gaussian_noise_table.arrays('test', standardized=False)
    _, sigma = predict_moments(model, X_test)
    assert np.mean(sigma) == pytest.approx(1.0, rel=0.15)


@pytest.mark.slow
def test_gaussian_variance_shrinks_on_noiseless_data():
    X = make_rng(8).uniform(-1.0, 1.0, (1000, 2))
    table = split(table_from_arrays(X, X[:, 0] + 0.5 * X[:, 1]), (0.8, 0.1, 0.1), seed=8)
    X_train, _ = table.arrays('train')
    checkpoints = {10: None, 30: None, 90: None}

    def record(epoch, net, loss):
        if epoch + 1 in checkpoints:
            checkpoints[epoch + 1] = float(np.mean(np.exp(forward(net, X_train)[:, 1])))

    train_gaussian(table, TrainConfig(learning_rate=1e-3, epochs=90, seed=0), hidden=(32, 32), on_epoch=record)
    variances = [checkpoints[e] for e in sorted(checkpoints)]
    assert variances[0] >= variances[1] >= variances[2]


# =======================================
# Logistic classification
# =======================================

def test_bce_gradient():
    loss, grad = binary_cross_entropy([0.0, 0.0], [1.0, 0.0])
    assert loss == pytest.approx(np.log(2))
    assert grad[:, 0] == pytest.approx([-0.25, 0.25])


def test_logistic_network_separates_threshold_labels():
    r = make_rng(2)
    X = r.standard_normal((1000, 3))
    table = split(table_from_arrays(X, X[:, 0] + X[:, 1]), (0.8, 0.1, 0.1), seed=2)
    table = binarize_targets(table, 0.0)
    model = train_logistic(table, TrainConfig(learning_rate=1e-2, weight_decay=1e-3, epochs=20, seed=0), hidden=(32, 32))
    X_test, y_test = table.arrays('test', standardized=False)
    probs = logistic_scores(model, X_test)
    assert np.all((probs >= 0) & (probs <= 1))
    assert accuracy(y_test, (probs > 0.5).astype(int)) > 0.85


# =======================================
# Random and oracle
# =======================================

def test_random_scores_have_chance_auc():
    r = make_rng(3)
    labels = r.integers(0, 2, 10_000)
    assert 0.47 <= roc_auc(random_scores(make_rng(4), 10_000), labels).auc <= 0.53


def test_random_score_in_unit_interval():
    r = make_rng(5)
    assert all(0.0 <= random_score(r) <= 1.0 for _ in range(100))


def test_oracle_separates_disjoint_pools():
    r = make_rng(6)
    features = np.concatenate([r.uniform(-2, -1, (50, 3)), r.uniform(1, 2, (50, 3))])
    labels = np.repeat([0, 1], 50)
    assert roc_auc(oracle_scores(features, labels), labels).auc == 1.0
    assert np.array_equal(oracle_score(features, labels), oracle_scores(features, labels))


def test_oracle_needs_both_classes():
    with pytest.raises(InvalidInputError):
        oracle_scores(np.zeros((10, 2)), np.zeros(10, dtype=int))
