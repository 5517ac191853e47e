# Feed-forward network with explicit backpropagation and an Adam optimizer.
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from uncq.errors import DataFormatError, InvalidInputError, TrainingDivergedError
from uncq.store import load_json, save_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ACTIVATIONS = ('relu', 'tanh')

# Upper bound on epochs accepted by any training configuration.
MAX_EPOCHS = 5000

# 2 hidden layers x 64 units for UCI-scale regression.
DEFAULT_HIDDEN = (64, 64)


# =======================================
# Random number generation
# =======================================

def make_rng(seed):
    """PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed, count):
    """Derive ``count`` independent integer seeds from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


# =======================================
# Network definition
# =======================================

@dataclass(frozen=True)
class Mlp:
    """
    Dense network. ``weights[i]`` has shape (layer_dims[i+1], layer_dims[i]);
    the activation applies to hidden layers only, the output layer is linear.
    """
    layer_dims: tuple
    weights: tuple
    biases: tuple
    activation: str = 'relu'

    def __post_init__(self):
        object.__setattr__(self, 'layer_dims', tuple(int(d) for d in self.layer_dims))
        object.__setattr__(self, 'weights', tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, 'biases', tuple(np.asarray(b, dtype=float) for b in self.biases))

        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"Unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise InvalidInputError(f"layer_dims must hold at least two positive sizes, got {self.layer_dims}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise InvalidInputError("Number of weight/bias arrays does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != expected:
                raise InvalidInputError(f"Layer {i} weight shape {w.shape} != {expected}")
            if b.shape != (self.layer_dims[i + 1],):
                raise InvalidInputError(f"Layer {i} bias shape {b.shape} != ({self.layer_dims[i + 1]},)")

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    def params(self):
        """Parameters in optimizer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_params(self, params):
        """Return a new network holding ``params`` (same order as ``params()``)."""
        if len(params) != 2 * self.n_layers:
            raise InvalidInputError("Parameter list does not match the network")
        return Mlp(self.layer_dims, tuple(params[0::2]), tuple(params[1::2]), self.activation)


@dataclass(frozen=True)
class Trace:
    """Per-layer values recorded by forward_trace; activations[0] is the input batch."""
    activations: list
    pre_activations: list

    @property
    def inputs(self):
        return self.activations[0]

    @property
    def output(self):
        return self.activations[-1]


@dataclass(frozen=True)
class Gradients:
    weights: tuple
    biases: tuple

    def flat(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_mlp(layer_dims, activation='relu', rng=None):
    """
    Glorot-uniform weights in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], zero biases.
    """
    rng = rng if rng is not None else make_rng(0)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(layer_dims), tuple(weights), tuple(biases), activation)


def activate(z, kind):
    if kind == 'relu':
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z, a, kind):
    if kind == 'relu':
        return (z > 0).astype(float)
    return 1.0 - a * a


def _as_batch(net, inputs):
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise InvalidInputError(f"Input of shape {np.shape(inputs)} does not match input dimension {net.input_dim}")
    return x, single


# =======================================
# Forward and backward passes
# =======================================

def forward(net, inputs):
    """
    Evaluate the network on one input vector or a batch of row vectors.

    Args:
        net (Mlp): network to evaluate.
        inputs (array-like): shape (input_dim,) or (n, input_dim).

    Returns:
        np.ndarray: shape (output_dim,) or (n, output_dim).

    Raises:
        InvalidInputError: on a dimension mismatch.
    """
    h, single = _as_batch(net, inputs)
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        h = z if i == last else activate(z, net.activation)
    return h[0] if single else h


def forward_trace(net, inputs):
    """Batch forward pass keeping the intermediate values needed by backward()."""
    h, _ = _as_batch(net, inputs)
    activations = [h]
    pre_activations = []
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre_activations.append(z)
        h = z if i == last else activate(z, net.activation)
        activations.append(h)
    return Trace(activations, pre_activations)


def backward(net, inputs, output_grad, trace=None):
    """
    Backpropagate ``output_grad`` (dLoss/dOutput) to every weight and bias.

    For a batch the gradients are summed over rows; callers that average their
    loss pass an already averaged ``output_grad``.

    Returns:
        Gradients: arrays shaped like ``net.weights`` and ``net.biases``.
    """
    if trace is None:
        trace = forward_trace(net, inputs)
    delta = np.asarray(output_grad, dtype=float)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != trace.output.shape:
        raise InvalidInputError(f"Output gradient shape {np.shape(output_grad)} != output shape {trace.output.shape}")

    last = net.n_layers - 1
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * _activate_grad(trace.pre_activations[i], trace.activations[i + 1], net.activation)
        grads_w[i] = delta.T @ trace.activations[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i]
    return Gradients(tuple(grads_w), tuple(grads_b))


# =======================================
# Optimizer
# =======================================

@dataclass
class AdamState:
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def create(cls, params, learning_rate, weight_decay=0.0, **kwargs):
        if learning_rate <= 0:
            raise InvalidInputError(f"learning_rate must be positive, got {learning_rate}")
        if weight_decay < 0:
            raise InvalidInputError(f"weight_decay must be nonnegative, got {weight_decay}")
        return cls(
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            first_moment=[np.zeros_like(p, dtype=float) for p in params],
            second_moment=[np.zeros_like(p, dtype=float) for p in params],
            **kwargs,
        )


def adam_step(params, grads, state):
    """
    One Adam update. Weight decay is coupled: ``weight_decay * p`` is added to
    the gradient before the moment updates.

    Returns:
        tuple[list[np.ndarray], AdamState]: new parameter arrays and the advanced state.

    Raises:
        InvalidInputError: shape mismatch between params, grads and accumulators.
        TrainingDivergedError: a gradient entry is NaN or infinite.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise InvalidInputError("params, grads and optimizer state have different lengths")
    for p, g, m in zip(params, grads, state.first_moment):
        if np.shape(p) != np.shape(g) or np.shape(p) != np.shape(m):
            raise InvalidInputError(f"Shape mismatch in adam_step: {np.shape(p)} vs {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("Non-finite gradient")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=float)
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g
        state.first_moment[i] = m
        state.second_moment[i] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
    return updated, state


# =======================================
# Training loop
# =======================================

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInputError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise InvalidInputError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not 1 <= self.epochs <= MAX_EPOCHS:
            raise InvalidInputError(f"epochs must be in [1, {MAX_EPOCHS}], got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size must be positive, got {self.batch_size}")

    def to_dict(self):
        return {
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'seed': self.seed,
        }


def train_network(net, n_rows, step_fn, cfg, rng, on_epoch=None):
    """
    Minibatch Adam loop shared by every trainer in the package.

    Args:
        net (Mlp): initial network.
        n_rows (int): number of training rows; each epoch visits a fresh permutation.
        step_fn (callable): ``step_fn(net, idx, rng) -> (trace, mean_loss, output_grad)``.
        cfg (TrainConfig): optimizer and schedule settings.
        rng (np.random.Generator): drives shuffling and anything step_fn samples.
        on_epoch (callable, optional): ``on_epoch(epoch, net, epoch_loss)`` after each epoch.

    Returns:
        tuple[Mlp, list[float]]: trained network and per-epoch mean losses.

    Raises:
        TrainingDivergedError: on a non-finite loss or gradient, with the epoch index.
    """
    state = AdamState.create(net.params(), cfg.learning_rate, cfg.weight_decay)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_rows)
        total = 0.0
        for start in range(0, n_rows, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            trace, loss, output_grad = step_fn(net, idx, rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError("Non-finite training loss", epoch=epoch)
            grads = backward(net, trace.inputs, output_grad, trace=trace)
            try:
                params, state = adam_step(net.params(), grads.flat(), state)
            except TrainingDivergedError:
                raise TrainingDivergedError("Non-finite gradient", epoch=epoch)
            net = net.with_params(params)
            total += float(loss) * len(idx)
        epoch_loss = total / n_rows
        losses.append(epoch_loss)
        logger.debug(f"epoch {epoch + 1}/{cfg.epochs} loss={epoch_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, net, epoch_loss)
    return net, losses


# =======================================
# Classification substrate
# =======================================

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over a batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    log_p = log_softmax(logits, axis=1)
    loss = -float(np.mean(log_p[np.arange(n), labels]))
    grad = softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train_classifier(features, labels, n_classes, cfg, hidden=(256, 256), activation='relu'):
    """
    Train a softmax classifier; its penultimate layer serves as the featurizer.

    Returns:
        Mlp: network with ``n_classes`` linear outputs (logits).
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if len(X) != len(y) or len(y) == 0:
        raise InvalidInputError("features and labels must be nonempty and of equal length")
    if y.min() < 0 or y.max() >= n_classes:
        raise InvalidInputError(f"labels must lie in 0..{n_classes - 1}")

    rng = make_rng(cfg.seed)
    net = init_mlp([X.shape[1], *hidden, n_classes], activation, rng)

    def step(net, idx, rng):
        trace = forward_trace(net, X[idx])
        loss, grad = softmax_cross_entropy(trace.output, y[idx])
        return trace, loss, grad

    logger.info(f"Training classifier on {len(y)} rows, {n_classes} classes, {cfg.epochs} epochs")
    net, losses = train_network(net, len(y), step, cfg, rng)
    logger.info(f"Classifier final loss {losses[-1]:.4f}")
    return net


# =======================================
# Persistence
# =======================================

def mlp_to_dict(net):
    return {
        'schema_version': SCHEMA_VERSION,
        'layer_dims': list(net.layer_dims),
        'activation': net.activation,
        'weights': [w.tolist() for w in net.weights],
        'biases': [b.tolist() for b in net.biases],
    }


def mlp_from_dict(doc):
    try:
        version = doc['schema_version']
        if version != SCHEMA_VERSION:
            raise DataFormatError(f"Unsupported network schema_version {version}")
        return Mlp(
            tuple(doc['layer_dims']),
            tuple(np.array(w, dtype=float).reshape(len(w), -1) for w in doc['weights']),
            tuple(np.array(b, dtype=float) for b in doc['biases']),
            doc['activation'],
        )
    except (KeyError, TypeError) as e:
        raise DataFormatError(f"Malformed network document: {e}")


def save_mlp(net, path):
    return save_json(path, mlp_to_dict(net))


def load_mlp(path):
    return mlp_from_dict(load_json(path))
