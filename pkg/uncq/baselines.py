# Single-model comparison methods: conditional-Gaussian intervals, softmax-derived
# out-of-distribution scores, logistic classification, and the random/oracle endpoints.
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax, xlogy
from scipy.stats import norm
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold, cross_val_predict
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from uncq.errors import InvalidInputError
from uncq.net import DEFAULT_HIDDEN, forward, forward_trace, init_mlp, make_rng, train_network
from uncq.sqr import IntervalSet, PredictionInterval

logger = logging.getLogger(__name__)

SOFTMAX_KINDS = ('entropy', 'largest', 'functional', 'geometrical')
ORACLE_FOLDS = 5


# =======================================
# Conditional Gaussian
# =======================================

@dataclass(frozen=True)
class GaussianHeadNet:
    """Two outputs per row: mean and log-variance of the standardized target."""
    net: object
    feature_dim: int
    target_mean: float = 0.0
    target_std: float = 1.0
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        if self.net.output_dim != 2 or self.net.input_dim != self.feature_dim:
            raise InvalidInputError("A Gaussian head network maps feature_dim inputs to 2 outputs")
        if self.feature_mean is None:
            object.__setattr__(self, 'feature_mean', np.zeros(self.feature_dim))
        if self.feature_std is None:
            object.__setattr__(self, 'feature_std', np.ones(self.feature_dim))


def gaussian_nll_objective(net, X, y):
    """
    Mean of 0.5 * (log s2 + (y - mu)^2 / s2) with s2 = exp(second output).

    Returns:
        tuple[Trace, float, np.ndarray]: trace, mean loss, output gradient (n, 2).
    """
    trace = forward_trace(net, X)
    mu, log_var = trace.output[:, 0], trace.output[:, 1]
    residual = np.asarray(y, dtype=float).reshape(-1) - mu
    precision = np.exp(-log_var)
    n = len(residual)
    loss = float(np.mean(0.5 * (log_var + residual * residual * precision)))
    grad = np.column_stack([
        -residual * precision,
        0.5 * (1.0 - residual * residual * precision),
    ]) / n
    return trace, loss, grad


def train_gaussian(data, cfg, hidden=DEFAULT_HIDDEN, activation='relu', on_epoch=None):
    """
    Fit mean and variance heads by Gaussian negative log-likelihood.

    Args:
        data (LabeledTable): split regression table.
        cfg (TrainConfig): optimizer settings and seed.

    Returns:
        GaussianHeadNet
    """
    X, y = data.arrays('train', standardized=True)
    if len(y) < 2:
        raise InvalidInputError(f"Need at least 2 training rows, got {len(y)}")
    rng = make_rng(cfg.seed)
    net = init_mlp([X.shape[1], *hidden, 2], activation, rng)

    def step(net, idx, rng):
        return gaussian_nll_objective(net, X[idx], y[idx])

    logger.info(f"Training Gaussian baseline on {len(y)} rows (lr={cfg.learning_rate}, wd={cfg.weight_decay})")
    net, _ = train_network(net, len(y), step, cfg, rng, on_epoch=on_epoch)
    return GaussianHeadNet(
        net,
        data.n_features,
        float(data.target_stats.mean),
        float(data.target_stats.std),
        data.feature_stats.mean,
        data.feature_stats.std,
    )


def predict_moments(model, X):
    """Predicted mean and standard deviation in target units."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    out = forward(model.net, (X - model.feature_mean) / model.feature_std)
    mu = out[:, 0] * model.target_std + model.target_mean
    sigma = np.exp(0.5 * out[:, 1]) * model.target_std
    return mu, sigma


def normal_quantile(p):
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"p must lie in (0, 1), got {p}")
    return float(norm.ppf(p))


def interval_from_moments(mu, sigma, alpha):
    z = normal_quantile(1.0 - alpha / 2.0)
    mu = np.asarray(mu, dtype=float)
    half = z * np.asarray(sigma, dtype=float)
    return IntervalSet(mu - half, mu + half, alpha, 0)


def gaussian_intervals(model, X, alpha):
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return interval_from_moments(*predict_moments(model, X), alpha)


def gaussian_interval(model, x, alpha):
    """mu(x) -/+ z_{1-alpha/2} sigma(x)."""
    intervals = gaussian_intervals(model, np.asarray(x, dtype=float)[None, :], alpha)
    return PredictionInterval(float(intervals.lower[0]), float(intervals.upper[0]), alpha)


# =======================================
# Softmax scores
# =======================================

@dataclass(frozen=True)
class SoftmaxScorer:
    kind: str
    temperature: float = 1.0
    use_logits: bool = False

    def __post_init__(self):
        if self.kind not in SOFTMAX_KINDS:
            raise InvalidInputError(f"Unknown softmax score {self.kind!r}; expected one of {SOFTMAX_KINDS}")
        if not self.temperature > 0:
            raise InvalidInputError(f"temperature must be positive, got {self.temperature}")


def _top_two(values):
    order = np.argsort(-values, axis=1, kind='stable')
    rows = np.arange(len(values))
    return order[:, 0], order[:, 1], values[rows, order[:, 0]], values[rows, order[:, 1]]


def softmax_scores(scorer, logits, weights=None):
    """
    Uncertainty scores for a batch of logits; larger means more out-of-domain.

    Args:
        scorer (SoftmaxScorer): which score to compute.
        logits (np.ndarray): (n, n_classes).
        weights (np.ndarray, optional): final-layer weight rows (n_classes, h); the
            geometrical margin is divided by the norm of the two top rows' difference.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise InvalidInputError("softmax scores need at least 2 classes")
    scaled = logits / scorer.temperature
    p = softmax(scaled, axis=1)

    if scorer.kind == 'entropy':
        return -np.sum(xlogy(p, p), axis=1)
    # use_logits swaps probabilities for the tempered logits; entropy always uses probabilities
    if scorer.kind == 'largest':
        return -scaled.max(axis=1) if scorer.use_logits else 1.0 - p.max(axis=1)
    if scorer.kind == 'functional':
        _, _, first, second = _top_two(scaled if scorer.use_logits else p)
        return -(first - second)

    first_idx, second_idx, first, second = _top_two(scaled if scorer.use_logits else p)
    margin = first - second
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        norms = np.linalg.norm(weights[first_idx] - weights[second_idx], axis=1)
        margin = margin / np.where(norms > 0, norms, 1.0)
    return -margin


def softmax_score(scorer, logits, weights=None):
    return float(softmax_scores(scorer, np.asarray(logits, dtype=float)[None, :], weights)[0])


# =======================================
# Logistic classification
# =======================================

@dataclass(frozen=True)
class LogisticNet:
    net: object
    feature_mean: np.ndarray
    feature_std: np.ndarray


def binary_cross_entropy(logits, y):
    """Mean BCE on logits and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss, ((expit(z) - y) / len(y)).reshape(-1, 1)


def train_logistic(data, cfg, hidden=(100, 100), activation='relu'):
    """Binary classifier with a single logit output, trained on 0/1 targets."""
    X, _ = data.arrays('train', standardized=True)
    _, y = data.arrays('train', standardized=False)
    rng = make_rng(cfg.seed)
    net = init_mlp([X.shape[1], *hidden, 1], activation, rng)

    def step(net, idx, rng):
        trace = forward_trace(net, X[idx])
        loss, grad = binary_cross_entropy(trace.output, y[idx])
        return trace, loss, grad

    net, _ = train_network(net, len(y), step, cfg, rng)
    return LogisticNet(net, data.feature_stats.mean, data.feature_stats.std)


def logistic_scores(model, X):
    """Positive-class probabilities."""
    X = (np.asarray(X, dtype=float) - model.feature_mean) / model.feature_std
    return expit(forward(model.net, X)[:, 0])


# =======================================
# Random and oracle endpoints
# =======================================

def random_scores(rng, n):
    return rng.uniform(0.0, 1.0, size=n)


def random_score(rng):
    """U[0, 1], independent of any input."""
    return float(rng.uniform())


def oracle_scores(features, labels, seed=0, folds=ORACLE_FOLDS):
    """
    Out-domain probabilities from a logistic separator fitted on the true in/out labels.

    Each row is scored by a model that never saw it (stratified k-fold cross-fitting).
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if features.ndim == 1:
        features = features[:, None]
    counts = np.bincount(labels, minlength=2)
    if len(counts) != 2 or counts.min() < folds:
        raise InvalidInputError(f"oracle needs at least {folds} examples of each of two classes")
    model = make_pipeline(StandardScaler(), LogisticRegression(max_iter=1000))
    cv = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return cross_val_predict(model, features, labels, cv=cv, method='predict_proba')[:, 1]


def oracle_score(features, labels, seed=0):
    return oracle_scores(features, labels, seed)
