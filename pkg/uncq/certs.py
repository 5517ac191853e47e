# Orthonormal certificates for out-of-distribution scoring, plus the comparison
# scorers that live in feature space (distance, PCA) and the Gaussian tail-bound check.
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from uncq.data import gen_gaussian_pair
from uncq.errors import DataFormatError, InvalidInputError
from uncq.net import MAX_EPOCHS, AdamState, Mlp, activate, adam_step, forward, make_rng, spawn_seeds
from uncq.store import load_json, save_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOSS_KINDS = ('squared_error', 'task_loss')

DEFAULT_PERCENTILE = 99.0

MIN_TAIL_SAMPLES = 100_000
ORTHONORMAL_TOL = 1e-6


# =======================================
# Certificates
# =======================================

@dataclass(frozen=True)
class CertTrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.epochs <= MAX_EPOCHS:
            raise InvalidInputError(f"epochs must be in [1, {MAX_EPOCHS}], got {self.epochs}")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise InvalidInputError("batch_size and learning_rate must be positive")


@dataclass(frozen=True)
class CertificateSet:
    """h x k matrix C; the epistemic score of a feature phi is ||C^T phi||^2."""
    C: np.ndarray
    lam: float
    loss_kind: str = 'squared_error'

    @property
    def h(self):
        return self.C.shape[0]

    @property
    def k(self):
        return self.C.shape[1]

    def score(self, features):
        """Scores for a batch (n, h) or a single vector (h,)."""
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != self.h:
            raise InvalidInputError(f"Feature dimension {features.shape[-1]} != certificate dimension {self.h}")
        projected = features @ self.C
        return np.sum(projected * projected, axis=-1)

    def gram_error(self):
        """||C^T C - I_k||_F."""
        return float(np.sqrt(orthonormality_penalty(self.C)))


def orthonormality_penalty(C):
    """Squared Frobenius norm of C^T C - I_k."""
    C = np.asarray(C, dtype=float)
    gap = C.T @ C - np.eye(C.shape[1])
    return float(np.sum(gap * gap))


def certificate_objective(C, features, lam, loss_kind='squared_error'):
    """
    Mean certificate loss on ``features`` plus lam * ||C^T C - I||_F^2.

    squared_error uses ||C^T phi||^2. task_loss is the symmetric logistic loss
    sum_j softplus(z_j) + softplus(-z_j) - 2 log 2 with z = C^T phi, the binary
    cross-entropy of sigmoid(z_j) against target 1/2; both vanish only at z = 0.

    Returns:
        tuple[float, np.ndarray]: objective value and its gradient w.r.t. C.
    """
    if loss_kind not in LOSS_KINDS:
        raise InvalidInputError(f"Unknown loss_kind {loss_kind!r}; expected one of {LOSS_KINDS}")
    C = np.asarray(C, dtype=float)
    features = np.asarray(features, dtype=float)
    n = len(features)
    Z = features @ C
    if loss_kind == 'squared_error':
        data_loss = float(np.sum(Z * Z)) / n
        data_grad = 2.0 * features.T @ Z / n
    else:
        # softplus(z) + softplus(-z) = 2 log cosh(z / 2) + 2 log 2
        data_loss = float(np.sum(np.logaddexp(0.0, Z) + np.logaddexp(0.0, -Z) - 2.0 * np.log(2.0))) / n
        data_grad = features.T @ (2.0 * expit(Z) - 1.0) / n

    gap = C.T @ C - np.eye(C.shape[1])
    loss = data_loss + lam * float(np.sum(gap * gap))
    grad = data_grad + 4.0 * lam * C @ gap
    return loss, grad


def random_orthonormal(h, k, rng):
    """Gaussian entries scaled by 1/sqrt(h), then orthonormalized by QR."""
    G = rng.standard_normal((h, k)) / np.sqrt(h)
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def train_certificates(features, k, lam, loss_kind='squared_error', cfg=None):
    """
    Fit k linear certificates that map the training features to zero while
    staying close to orthonormal.

    Args:
        features (np.ndarray): (n, h) training features.
        k (int): number of certificates, 1 <= k <= h.
        lam (float): orthonormality penalty weight; 0 gives unregularized certificates.
        loss_kind (str): "squared_error" or "task_loss".
        cfg (CertTrainConfig): optimizer schedule.

    Returns:
        CertificateSet

    Raises:
        InvalidInputError: k outside [1, h] or fewer rows than certificates.
        TrainingDivergedError: non-finite gradient.
    """
    cfg = cfg if cfg is not None else CertTrainConfig()
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise InvalidInputError("features must be an (n, h) matrix")
    n, h = features.shape
    if not 1 <= k <= h:
        raise InvalidInputError(f"k must lie in [1, h={h}], got {k}")
    if n < k:
        raise InvalidInputError(f"Need at least k={k} feature rows, got {n}")
    if lam < 0:
        raise InvalidInputError(f"lambda must be nonnegative, got {lam}")
    if not np.all(np.isfinite(features)):
        raise InvalidInputError("features contain non-finite values")
    if loss_kind not in LOSS_KINDS:
        raise InvalidInputError(f"Unknown loss_kind {loss_kind!r}; expected one of {LOSS_KINDS}")

    # QR start, then minibatch Adam on C only
    rng = make_rng(cfg.seed)
    C = random_orthonormal(h, k, rng)
    state = AdamState.create([C], cfg.learning_rate)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = features[order[start:start + cfg.batch_size]]
            _, grad = certificate_objective(C, batch, lam, loss_kind)
            (C,), state = adam_step([C], [grad], state)
        # full-pass objective, debug only
        if logger.isEnabledFor(logging.DEBUG):
            loss, _ = certificate_objective(C, features, lam, loss_kind)
            logger.debug(f"certificates epoch {epoch + 1}/{cfg.epochs} objective={loss:.6f}")

    certs = CertificateSet(C, float(lam), loss_kind)
    logger.info(f"Trained {k} certificates on {n}x{h} features (lambda={lam}, gram error {certs.gram_error():.4f})")
    return certs


def epistemic_score(certs, feature):
    """||C^T phi||^2 for one feature vector (or a batch, returning an array)."""
    scores = certs.score(feature)
    return float(scores) if np.ndim(scores) == 0 else scores


def ood_threshold(scores_in_domain, percentile=DEFAULT_PERCENTILE):
    """Linear-interpolation percentile of in-domain scores; abstain above it."""
    scores = np.asarray(scores_in_domain, dtype=float).reshape(-1)
    if len(scores) == 0:
        raise InvalidInputError("ood_threshold needs at least one in-domain score")
    if not 0.0 < percentile <= 100.0:
        raise InvalidInputError(f"percentile must lie in (0, 100], got {percentile}")
    return float(np.percentile(scores, percentile))


# =======================================
# Featurizer
# =======================================

@dataclass(frozen=True)
class FeatureExtractor:
    """Classifier truncated before its output layer; features are post-activation."""
    net: Mlp

    @classmethod
    def from_classifier(cls, classifier):
        if classifier.n_layers < 2:
            raise InvalidInputError("A featurizer needs a classifier with at least one hidden layer")
        return cls(Mlp(
            classifier.layer_dims[:-1],
            classifier.weights[:-1],
            classifier.biases[:-1],
            classifier.activation,
        ))

    @property
    def feature_dim(self):
        return self.net.output_dim

    def extract(self, X):
        return activate(forward(self.net, X), self.net.activation)


# =======================================
# Feature-space comparison scorers
# =======================================

def _reference(train_features, cap, seed):
    train_features = np.asarray(train_features, dtype=float)
    if train_features.ndim == 1:
        train_features = train_features[:, None]
    if len(train_features) == 0:
        raise InvalidInputError("distance_score needs a nonempty training set")
    if cap is not None and len(train_features) > cap:
        rows = make_rng(seed).choice(len(train_features), size=cap, replace=False)
        train_features = train_features[rows]
    return train_features


def distance_scores(train_features, queries, percentile=None, cap=None, seed=0, chunk=1024):
    """
    Squared Euclidean distance from each query to its nearest training feature.

    With ``percentile`` set, the given percentile of the distances replaces the minimum.
    Every training row is used unless ``cap`` asks for a seeded subsample.
    """
    reference = _reference(train_features, cap, seed)
    queries = np.asarray(queries, dtype=float)
    if queries.ndim == 1:
        queries = queries[None, :]
    if queries.shape[1] != reference.shape[1]:
        raise InvalidInputError(f"Query dimension {queries.shape[1]} != training dimension {reference.shape[1]}")
    out = np.empty(len(queries))
    for start in range(0, len(queries), chunk):
        d = cdist(queries[start:start + chunk], reference, 'sqeuclidean')
        out[start:start + chunk] = d.min(axis=1) if percentile is None else np.percentile(d, percentile, axis=1)
    return out


def distance_score(train_features, feature, percentile=None):
    """min_i ||phi_i - phi||^2 over every training feature."""
    return float(distance_scores(train_features, np.atleast_1d(feature), percentile, cap=None)[0])


@dataclass(frozen=True)
class PcaScorer:
    mean: np.ndarray
    directions: np.ndarray

    def score(self, features):
        centered = np.asarray(features, dtype=float) - self.mean
        projected = centered @ self.directions
        return np.sum(projected * projected, axis=-1)


def fit_pca_scorer(train_features, k):
    """Bottom-k principal directions of the centered training features."""
    X = np.asarray(train_features, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise InvalidInputError("train_features must be a nonempty (n, h) matrix")
    h = X.shape[1]
    if not 1 <= k <= h:
        raise InvalidInputError(f"k must lie in [1, h={h}], got {k}")
    mean = X.mean(axis=0)
    centered = X - mean
    _, vecs = np.linalg.eigh(centered.T @ centered / len(X))
    return PcaScorer(mean, vecs[:, :k])


def pca_score(train_features, k, feature):
    scores = fit_pca_scorer(train_features, k).score(feature)
    return float(scores) if np.ndim(scores) == 0 else scores


# =======================================
# Gaussian tail bounds
# =======================================

@dataclass(frozen=True)
class GaussianSpec:
    """
    In-domain N(mean, V diag(eigvals) V^T) and out-domain N(out_mean, V' diag(out_eigvals) V'^T).

    Eigenvalues are sorted descending; the last k in-domain eigenvalues are
    the certificate variances Gamma.
    """
    mean: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    out_mean: np.ndarray
    out_eigvecs: np.ndarray
    out_eigvals: np.ndarray
    k: int

    def __post_init__(self):
        for name in ('mean', 'eigvecs', 'eigvals', 'out_mean', 'out_eigvecs', 'out_eigvals'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = len(self.eigvals)
        for V, lam in ((self.eigvecs, self.eigvals), (self.out_eigvecs, self.out_eigvals)):
            if V.shape != (d, d) or lam.shape != (d,):
                raise InvalidInputError(f"Eigen-decomposition shapes do not match dimension {d}")
            if not np.allclose(V.T @ V, np.eye(d), atol=1e-10, rtol=0):
                raise InvalidInputError("Eigenvector matrix is not orthogonal")
            if np.any(lam < 0):
                raise InvalidInputError("Covariance is not positive semi-definite")
            if np.any(np.diff(lam) > 0):
                raise InvalidInputError("Eigenvalues must be sorted descending")
        if self.mean.shape != (d,) or self.out_mean.shape != (d,):
            raise InvalidInputError("Means must match the covariance dimension")
        if not 1 <= self.k <= d:
            raise InvalidInputError(f"k must lie in [1, {d}], got {self.k}")

    @property
    def dim(self):
        return len(self.eigvals)

    @property
    def gamma(self):
        return self.eigvals[-self.k:]

    def certificate_matrix(self):
        """Bottom-k in-domain eigenvectors as an orthonormal h x k matrix."""
        return self.eigvecs[:, -self.k:]

    @classmethod
    def from_covariances(cls, cov, out_cov, k, mean=None, out_mean=None):
        def decompose(matrix):
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
                raise InvalidInputError("Covariance must be a symmetric square matrix")
            vals, vecs = np.linalg.eigh(matrix)
            if vals[0] < -1e-12:
                raise InvalidInputError("Covariance is not positive semi-definite")
            return np.clip(vals[::-1], 0.0, None), vecs[:, ::-1]

        vals, vecs = decompose(cov)
        out_vals, out_vecs = decompose(out_cov)
        d = len(vals)
        mean = np.zeros(d) if mean is None else mean
        out_mean = np.zeros(d) if out_mean is None else out_mean
        return cls(mean, vecs, vals, out_mean, out_vecs, out_vals, k)


def default_theorem_spec(seed=0):
    """
    4-d in-domain law with certificate variances (0.02, 0.01); the out-domain
    law puts its large variances on the in-domain null space.
    """
    Q, R = np.linalg.qr(make_rng(seed).standard_normal((4, 4)))
    V = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return GaussianSpec(
        mean=np.zeros(4),
        eigvecs=V,
        eigvals=np.array([1.0, 0.5, 0.02, 0.01]),
        out_mean=np.zeros(4),
        out_eigvecs=V[:, [3, 2, 0, 1]],
        out_eigvals=np.array([1.0, 0.25, 0.02, 0.01]),
        k=2,
    )


def _check_orthonormal(C):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise InvalidInputError("C must be a matrix")
    if np.sqrt(orthonormality_penalty(C)) > ORTHONORMAL_TOL:
        raise InvalidInputError("Certificate columns are not orthonormal")
    return C


def theorem1_bounds(spec, C, t):
    """
    Gaussian-concentration tail bounds on score - E[score] >= t.

    in_bound  = exp(-t^2 / (2 max_j Gamma_j))
    out_bound = exp(-t^2 / (2 max_j Lambda'_j ||C^T V'_j||^2)), j over out-domain eigen-directions.

    The out-domain Lipschitz constant pairs each out-domain eigenvector V'_j with
    the whole certificate matrix; a zero constant gives a zero bound.
    """
    C = _check_orthonormal(C)
    if C.shape[0] != spec.dim:
        raise InvalidInputError(f"C has {C.shape[0]} rows, spec dimension is {spec.dim}")
    if not t > 0:
        raise InvalidInputError(f"t must be positive, got {t}")

    def bound(lipschitz_sq):
        return 0.0 if lipschitz_sq <= 0 else float(np.exp(-t * t / (2.0 * lipschitz_sq)))

    in_lipschitz = float(np.max(spec.gamma))
    projected = C.T @ spec.out_eigvecs
    out_lipschitz = float(np.max(spec.out_eigvals * np.sum(projected * projected, axis=0)))
    return bound(in_lipschitz), bound(out_lipschitz)


@dataclass(frozen=True)
class TailReport:
    rows: list
    in_mean: float
    out_mean: float
    n_samples: int
    bound_scale: float = 1.0

    @property
    def passed(self):
        return all(row['satisfied'] for row in self.rows)

    def to_dict(self):
        return {
            'n_samples': self.n_samples,
            'bound_scale': self.bound_scale,
            'in_mean': self.in_mean,
            'out_mean': self.out_mean,
            'passed': self.passed,
            'rows': self.rows,
        }


def _shard_scores(spec, C, n, seed):
    x_in, x_out = gen_gaussian_pair(spec, n, seed=seed)
    p_in, p_out = x_in @ C, x_out @ C
    return np.sum(p_in * p_in, axis=1), np.sum(p_out * p_out, axis=1)


def empirical_tail_check(spec, C, ts, n_samples=MIN_TAIL_SAMPLES, seed=0, shards=4, jobs=1, bound_scale=1.0):
    """
    Monte Carlo exceedance frequencies of score - mean >= t against the tail bounds.

    Samples are drawn in ``shards`` with independent child seeds. A bound counts as
    satisfied when the frequency stays within 3 binomial standard deviations of it.
    ``bound_scale`` multiplies every bound (values below 1 are a harness self-test).

    Returns:
        TailReport: one row per (domain, t).
    """
    if n_samples < MIN_TAIL_SAMPLES:
        raise InvalidInputError(f"n_samples must be at least {MIN_TAIL_SAMPLES}, got {n_samples}")
    ts = [float(t) for t in ts]
    if not ts:
        raise InvalidInputError("At least one t is required")
    bounds = {t: theorem1_bounds(spec, C, t) for t in ts}

    sizes = [n_samples // shards + (1 if i < n_samples % shards else 0) for i in range(shards)]
    seeds = spawn_seeds(seed, shards)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        parts = list(pool.map(lambda args: _shard_scores(spec, C, *args), zip(sizes, seeds)))
    in_scores = np.concatenate([p[0] for p in parts])
    out_scores = np.concatenate([p[1] for p in parts])

    rows = []
    for domain, scores, which in (('in', in_scores, 0), ('out', out_scores, 1)):
        mean = float(scores.mean())
        for t in ts:
            freq = float(np.mean(scores - mean >= t))
            bound = bounds[t][which] * bound_scale
            slack = 3.0 * np.sqrt(bound * (1.0 - bound) / n_samples) if 0.0 < bound < 1.0 else 0.0
            rows.append({
                'domain': domain,
                't': t,
                'empirical_freq': freq,
                'bound': bound,
                'satisfied': bool(freq <= bound + slack),
            })
            logger.info(f"{domain}-domain t={t}: freq={freq:.6f} bound={bound:.6f}")
    return TailReport(rows, float(in_scores.mean()), float(out_scores.mean()), n_samples, bound_scale)


# =======================================
# Persistence
# =======================================

def save_certificates(certs, path):
    return save_json(path, {
        'schema_version': SCHEMA_VERSION,
        'h': certs.h,
        'k': certs.k,
        'lambda': certs.lam,
        'loss_kind': certs.loss_kind,
        'C': certs.C.tolist(),
    })


def load_certificates(path):
    doc = load_json(path)
    try:
        if doc['schema_version'] != SCHEMA_VERSION:
            raise DataFormatError(f"Unsupported certificate schema_version {doc['schema_version']}")
        C = np.asarray(doc['C'], dtype=float).reshape(doc['h'], doc['k'])
        return CertificateSet(C, float(doc['lambda']), doc['loss_kind'])
    except (KeyError, ValueError) as e:
        raise DataFormatError(f"Malformed certificate document {path}: {e}")
