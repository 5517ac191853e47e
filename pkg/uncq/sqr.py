# Simultaneous quantile regression: one network f(x, tau) for every quantile level.
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from uncq.errors import DataFormatError, InvalidInputError
from uncq.net import (
    DEFAULT_HIDDEN,
    TrainConfig,
    forward,
    forward_trace,
    init_mlp,
    make_rng,
    mlp_from_dict,
    mlp_to_dict,
    train_network,
)
from uncq.store import load_json, save_json

logger = logging.getLogger(__name__)

MEDIAN = 0.5


# =======================================
# Pinball loss
# =======================================

def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0.0) or np.any(tau > 1.0) or np.any(np.isnan(tau)):
        raise InvalidInputError(f"Quantile level must lie in [0, 1], got {tau}")
    return tau


def _scalar_or_array(values):
    return float(values) if np.ndim(values) == 0 else values


def pinball_loss(tau, y, y_hat):
    """
    tau * (y - y_hat) when y >= y_hat, else (1 - tau) * (y_hat - y).

    Broadcasts over arrays; scalars in, float out.
    """
    tau = _check_tau(tau)
    diff = np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float)
    loss = np.where(diff >= 0, tau * diff, (tau - 1.0) * diff)
    return _scalar_or_array(loss)


def pinball_grad(tau, y, y_hat):
    """Subgradient w.r.t. y_hat; the tie y == y_hat takes the (1 - tau) branch."""
    tau = _check_tau(tau)
    diff = np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float)
    grad = np.where(diff > 0, -tau, 1.0 - tau)
    return _scalar_or_array(grad)


def sqr_objective(net, inputs, y):
    """
    Mean pinball loss of a batch whose last input column holds each row's tau.

    Returns:
        tuple[Trace, float, np.ndarray]: forward trace, mean loss and the
        output gradient of shape (n, 1) for backward().
    """
    inputs = np.asarray(inputs, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    trace = forward_trace(net, inputs)
    y_hat = trace.output[:, 0]
    tau = inputs[:, -1]
    loss = float(np.mean(pinball_loss(tau, y, y_hat)))
    grad = pinball_grad(tau, y, y_hat) / len(y)
    return trace, loss, np.reshape(grad, (-1, 1))


def fit_constant_quantile(ys, tau):
    """Constant minimizing the mean pinball loss over ``ys``; the empirical tau-quantile."""
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if len(ys) == 0:
        raise InvalidInputError("Cannot fit a quantile to an empty sample")
    _check_tau(tau)
    lo, hi = float(ys.min()), float(ys.max())
    if lo == hi:
        return lo
    result = minimize_scalar(
        lambda c: float(np.mean(pinball_loss(tau, ys, c))),
        bounds=(lo, hi),
        method='bounded',
        options={'xatol': 1e-10 * max(1.0, hi - lo)},
    )
    return float(result.x)


def expected_pinball_slope(values, probs, y_hat, tau):
    """
    Derivative of the expected pinball loss of a discrete law at y_hat: F(y_hat) - tau.

    Negative left of the optimal y_hat, nonnegative from it onwards.
    """
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if values.shape != probs.shape or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidInputError("probs must be a nonnegative vector summing to 1, aligned with values")
    _check_tau(tau)
    return float(probs[values <= y_hat].sum() - tau)


# =======================================
# Models
# =======================================

@dataclass(frozen=True)
class SqrTrainConfig(TrainConfig):
    epochs: int = 500


@dataclass(frozen=True)
class QuantileNet:
    """
    Network over (standardized features ++ tau). Predictions come back in target units.
    """
    net: object
    feature_dim: int
    target_mean: float = 0.0
    target_std: float = 1.0
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        if self.net.input_dim != self.feature_dim + 1:
            raise InvalidInputError(f"Network input {self.net.input_dim} != feature_dim + 1 ({self.feature_dim + 1})")
        if self.net.output_dim != 1:
            raise InvalidInputError("A quantile network has exactly one output")
        mean = np.zeros(self.feature_dim) if self.feature_mean is None else np.asarray(self.feature_mean, dtype=float)
        std = np.ones(self.feature_dim) if self.feature_std is None else np.asarray(self.feature_std, dtype=float)
        object.__setattr__(self, 'feature_mean', mean)
        object.__setattr__(self, 'feature_std', std)

    def _inputs(self, X, tau):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise InvalidInputError(f"Features of shape {X.shape} do not match feature_dim {self.feature_dim}")
        tau = np.broadcast_to(_check_tau(tau), (len(X),))
        return np.column_stack([(X - self.feature_mean) / self.feature_std, tau])

    def predict_standardized(self, X, tau):
        return forward(self.net, self._inputs(X, tau))[:, 0]

    def predict(self, X, tau):
        """Quantile predictions for a batch; ``tau`` is a scalar or one level per row."""
        return self.predict_standardized(X, tau) * self.target_std + self.target_mean


@dataclass(frozen=True)
class QuantileEnsemble:
    """Independently trained per-tau networks answering only their own levels."""
    taus: tuple
    models: tuple

    def model_for(self, tau):
        for level, model in zip(self.taus, self.models):
            if np.isclose(level, tau):
                return model
        raise InvalidInputError(f"No network trained for tau={tau}; available {self.taus}")

    def predict(self, X, tau):
        if np.ndim(tau) != 0:
            raise InvalidInputError("QuantileEnsemble answers one tau per call")
        return self.model_for(float(tau)).predict(X, tau)


# =======================================
# Training
# =======================================

def _training_arrays(data):
    X, y = data.arrays('train', standardized=True)
    if len(y) < 2:
        raise InvalidInputError(f"Need at least 2 training rows, got {len(y)}")
    return X, np.asarray(y, dtype=float)


def _wrap(net, data):
    stats = data.target_stats
    return QuantileNet(
        net,
        data.n_features,
        float(stats.mean) if stats is not None else 0.0,
        float(stats.std) if stats is not None else 1.0,
        data.feature_stats.mean,
        data.feature_stats.std,
    )


def _fit(data, cfg, draw_tau, hidden, activation, on_epoch):
    X, y = _training_arrays(data)
    rng = make_rng(cfg.seed)
    net = init_mlp([X.shape[1] + 1, *hidden, 1], activation, rng)

    # tau is the last input column
    def step(net, idx, rng):
        inputs = np.column_stack([X[idx], draw_tau(rng, len(idx))])
        return sqr_objective(net, inputs, y[idx])

    net, losses = train_network(net, len(y), step, cfg, rng, on_epoch=on_epoch)
    # last tenth of epochs
    tail = losses[-max(1, len(losses) // 10):]
    logger.debug(f"Final-epoch pinball loss {losses[-1]:.5f} (tail mean {np.mean(tail):.5f})")
    return _wrap(net, data)


def train_sqr(data, cfg, hidden=DEFAULT_HIDDEN, activation='relu', on_epoch=None):
    """
    Train one network on all quantile levels at once.

    Every example in every minibatch draws its own tau ~ U[0, 1], appended to
    its standardized features.

    Args:
        data (LabeledTable): split table; training rows are used.
        cfg (SqrTrainConfig): optimizer settings and seed.
        hidden (tuple[int]): hidden layer widths.

    Returns:
        QuantileNet: trained model predicting in target units.

    Raises:
        TrainingDivergedError: non-finite loss, with the epoch index.
    """
    logger.info(f"Training SQR on {len(data.rows('train'))} rows (lr={cfg.learning_rate}, wd={cfg.weight_decay}, epochs={cfg.epochs})")
    return _fit(data, cfg, lambda rng, n: rng.uniform(0.0, 1.0, size=n), hidden, activation, on_epoch)


def train_fixed_quantile(data, tau, cfg, hidden=DEFAULT_HIDDEN, activation='relu'):
    """Same architecture as train_sqr with the tau input held at one level."""
    tau = float(_check_tau(tau))
    return _fit(data, cfg, lambda rng, n: np.full(n, tau), hidden, activation, None)


def train_quantile_ensemble(data, taus, cfg, hidden=DEFAULT_HIDDEN, activation='relu'):
    models = tuple(train_fixed_quantile(data, tau, cfg, hidden, activation) for tau in taus)
    return QuantileEnsemble(tuple(float(t) for t in taus), models)


# =======================================
# Prediction and intervals
# =======================================

def predict_quantile(model, x, tau):
    """Predicted tau-quantile in target units; scalar for a single feature vector."""
    values = model.predict(x, tau)
    return float(values[0]) if np.ndim(x) == 1 else values


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float
    alpha: float
    repaired: bool = False

    @property
    def width(self):
        return self.upper - self.lower


@dataclass(frozen=True)
class IntervalSet:
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    n_repaired: int = 0

    def __len__(self):
        return len(self.lower)

    def __iter__(self):
        for lo, hi in zip(self.lower, self.upper):
            yield PredictionInterval(float(lo), float(hi), self.alpha)

    @property
    def widths(self):
        return self.upper - self.lower


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")


def prediction_intervals(model, X, alpha):
    """
    (alpha/2, 1 - alpha/2) quantile intervals for a batch.

    Inverted endpoints are swapped and counted in ``n_repaired``; widths are never padded.
    """
    _check_alpha(alpha)
    lower = np.asarray(model.predict(X, alpha / 2.0), dtype=float)
    upper = np.asarray(model.predict(X, 1.0 - alpha / 2.0), dtype=float)
    inverted = upper < lower
    n_repaired = int(inverted.sum())
    if n_repaired:
        logger.debug(f"Repaired {n_repaired} inverted intervals")
        lower, upper = np.where(inverted, upper, lower), np.where(inverted, lower, upper)
    return IntervalSet(lower, upper, alpha, n_repaired)


def prediction_interval(model, x, alpha):
    intervals = prediction_intervals(model, np.asarray(x, dtype=float)[None, :], alpha)
    return PredictionInterval(float(intervals.lower[0]), float(intervals.upper[0]), alpha, intervals.n_repaired > 0)


def crossing_rate(model, xs, taus):
    """
    Fraction of (x, adjacent tau pair) events where the higher quantile is predicted lower.

    ``model`` only needs ``predict(X, tau)``.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or len(taus) < 2 or np.any(np.diff(taus) <= 0):
        raise InvalidInputError("taus must be a strictly increasing grid of at least 2 levels")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or len(xs) == 0:
        raise InvalidInputError("xs must be a nonempty matrix of feature vectors")
    preds = np.column_stack([np.asarray(model.predict(xs, tau), dtype=float) for tau in taus])
    return float(np.mean(np.diff(preds, axis=1) < 0))


# =======================================
# Binary classification
# =======================================

def classify_binary_batch(model, X):
    """Median predictions as scores; label 1 where the score exceeds 0.5."""
    scores = np.asarray(model.predict(X, MEDIAN), dtype=float)
    return (scores > 0.5).astype(int), scores


def classify_binary(model, x):
    labels, scores = classify_binary_batch(model, np.asarray(x, dtype=float)[None, :])
    return int(labels[0]), float(scores[0])


# =======================================
# Persistence
# =======================================

def save_quantile_net(model, path):
    return save_json(path, {
        'net': mlp_to_dict(model.net),
        'feature_dim': model.feature_dim,
        'target_mean': model.target_mean,
        'target_std': model.target_std,
        'feature_mean': model.feature_mean.tolist(),
        'feature_std': model.feature_std.tolist(),
    })


def load_quantile_net(path):
    doc = load_json(path)
    try:
        return QuantileNet(
            mlp_from_dict(doc['net']),
            int(doc['feature_dim']),
            float(doc['target_mean']),
            float(doc['target_std']),
            np.asarray(doc['feature_mean'], dtype=float),
            np.asarray(doc['feature_std'], dtype=float),
        )
    except KeyError as e:
        raise DataFormatError(f"Quantile network document {path} is missing {e}")
