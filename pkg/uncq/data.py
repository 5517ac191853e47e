# Dataset ingestion, standardization, splits and synthetic generators.
import gzip
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import pandas as pd
from pandas.api.types import is_numeric_dtype

from uncq.errors import DataFormatError, DatasetNotFoundError, InvalidInputError
from uncq.net import make_rng
from uncq.store import load_json, save_json

if TYPE_CHECKING:
    from uncq.certs import GaussianSpec

logger = logging.getLogger(__name__)

TASKS = ('regression', 'classification')
CATEGORICAL_POLICIES = ('onehot', 'drop', 'error')

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# The sinusoid noise term N(0, 1/3) is read as a variance.
SINUSOID_NOISE_VARIANCE = 1.0 / 3.0
SINUSOID_DIM = 10

CAUSAL_KINDS = ('AN', 'AN-S', 'LS', 'LS-S', 'MN')


# =======================================
# Tables and standardization
# =======================================

@dataclass(frozen=True)
class Standardization:
    """Affine statistics plus where they were computed from."""
    mean: np.ndarray
    std: np.ndarray
    provenance: str = 'train'

    def apply(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.std + self.mean


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int | None = None


@dataclass(frozen=True)
class LabeledTable:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple
    target_name: str = 'y'
    task: str = 'regression'
    split: Split | None = None
    feature_stats: Standardization | None = None
    target_stats: Standardization | None = None
    n_dropped: int = 0

    @property
    def n_rows(self):
        return len(self.targets)

    @property
    def n_features(self):
        return self.features.shape[1]

    def rows(self, part):
        if self.split is None:
            raise InvalidInputError("Table has no split; call split() or assign_split() first")
        if part not in ('train', 'val', 'test'):
            raise InvalidInputError(f"Unknown split part {part!r}")
        return getattr(self.split, part)

    def arrays(self, part, standardized=True):
        """
        Features and targets of one split part.

        Regression targets are standardized with training statistics when
        ``standardized`` is set; class labels are returned as integers.
        """
        idx = self.rows(part)
        X = self.features[idx]
        y = self.targets[idx]
        if standardized:
            X = self.feature_stats.apply(X)
            if self.task == 'regression':
                y = self.target_stats.apply(y)
        if self.task == 'classification':
            y = y.astype(int)
        return X, y

    @property
    def target_range(self):
        """max - min of the raw training targets; 1.0 for a constant target."""
        y = self.targets[self.rows('train')]
        span = float(np.max(y) - np.min(y))
        return span if span > 0 else 1.0


def table_from_arrays(features, targets, feature_names=None, target_name='y', task='regression'):
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or len(X) != len(y):
        raise InvalidInputError(f"features {np.shape(features)} and targets {np.shape(targets)} do not align")
    if task not in TASKS:
        raise InvalidInputError(f"task must be one of {TASKS}")
    if feature_names is None:
        feature_names = tuple(f"x{i + 1}" for i in range(X.shape[1]))
    return LabeledTable(X, y, tuple(feature_names), target_name, task)


def _fit_standardization(values):
    mean = np.mean(values, axis=0)
    std = np.std(values, axis=0)
    std = np.where(std > 0, std, 1.0)
    return Standardization(mean, std, provenance='train')


def assign_split(table, train, val, test, seed=None):
    """
    Attach an explicit partition and fit standardization on the training rows only.

    Raises:
        InvalidInputError: if the indices do not partition 0..n-1 or train is empty.
    """
    train = np.asarray(train, dtype=int)
    val = np.asarray(val, dtype=int)
    test = np.asarray(test, dtype=int)
    combined = np.sort(np.concatenate([train, val, test]))
    if len(combined) != table.n_rows or not np.array_equal(combined, np.arange(table.n_rows)):
        raise InvalidInputError("Split indices must partition the table rows disjointly")
    if len(train) == 0:
        raise InvalidInputError("Training split is empty")

    feature_stats = _fit_standardization(table.features[train])
    target_stats = None
    if table.task == 'regression':
        stats = _fit_standardization(table.targets[train])
        target_stats = Standardization(float(stats.mean), float(stats.std), 'train')
    return replace(
        table,
        split=Split(train, val, test, seed),
        feature_stats=feature_stats,
        target_stats=target_stats,
    )


def _partition_sizes(n, fractions):
    raw = np.asarray(fractions) * n
    sizes = np.floor(raw + 1e-9).astype(int)
    remainder = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind='stable')
    sizes[order[:remainder]] += 1
    # every part gets at least one row
    for part in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        sizes[donor] -= 1
        sizes[part] += 1
    return sizes


def split(table, fractions=(0.8, 0.1, 0.1), seed=0):
    """
    Deterministic shuffled train/val/test partition.

    Sizes are floored and the remaining rows handed out by largest fractional
    part, so n=10 with (0.8, 0.1, 0.1) gives (8, 1, 1).
    """
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (3,) or np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must be three positive numbers summing to 1, got {tuple(fractions)}")
    n = table.n_rows
    if n < 3:
        raise InvalidInputError(f"Need at least 3 rows to split, got {n}")
    n_train, n_val, _ = _partition_sizes(n, fractions)
    perm = make_rng(seed).permutation(n)
    return assign_split(
        table,
        perm[:n_train],
        perm[n_train:n_train + n_val],
        perm[n_train + n_val:],
        seed=seed,
    )


def binarize_targets(table, threshold):
    """Targets > threshold become 1, the rest 0 (e.g. Rings <= 10 vs > 10)."""
    binary = replace(table, targets=(table.targets > threshold).astype(float))
    if table.split is None:
        return binary
    return assign_split(binary, table.split.train, table.split.val, table.split.test, table.split.seed)


def save_split_manifest(table, path):
    s = table.split
    if s is None:
        raise InvalidInputError("Table has no split to save")
    return save_json(path, {
        'seed': s.seed,
        'n_rows': table.n_rows,
        'train': s.train.tolist(),
        'val': s.val.tolist(),
        'test': s.test.tolist(),
        'stats_provenance': table.feature_stats.provenance,
    })


def load_split_manifest(path):
    doc = load_json(path)
    try:
        return Split(
            np.asarray(doc['train'], dtype=int),
            np.asarray(doc['val'], dtype=int),
            np.asarray(doc['test'], dtype=int),
            doc.get('seed'),
        )
    except KeyError as e:
        raise DataFormatError(f"Split manifest {path} is missing {e}")


# =======================================
# CSV ingestion
# =======================================

def load_csv(path, target_column=None, categorical_policy='onehot'):
    """
    Load a CSV file with a header row into a LabeledTable.

    Rows holding a missing cell (empty or "?") are dropped and counted.

    Args:
        path (str | Path): CSV file.
        target_column (str, optional): target column; defaults to the last column.
        categorical_policy (str): "onehot" encodes non-numeric feature columns,
            "drop" removes them, "error" rejects them.

    Returns:
        LabeledTable: unsplit regression table.
    """
    if categorical_policy not in CATEGORICAL_POLICIES:
        raise InvalidInputError(f"categorical_policy must be one of {CATEGORICAL_POLICIES}")
    path = Path(path)
    if not path.exists():
        raise DatasetNotFoundError(f"Dataset file not found: {path}")

    try:
        frame = pd.read_csv(path, na_values=['?'], skipinitialspace=True, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"Malformed CSV {path}: {e}")

    if frame.shape[1] < 2:
        raise DataFormatError(f"{path} needs at least one feature column and a target column")
    target_column = target_column if target_column is not None else frame.columns[-1]
    if target_column not in frame.columns:
        raise InvalidInputError(f"Unknown target column {target_column!r}; columns are {list(frame.columns)}")

    before = len(frame)
    frame = frame.dropna()
    dropped = before - len(frame)
    if dropped:
        logger.info(f"Dropped {dropped} rows with missing values from {path.name}")
    if frame.empty and before > 0:
        raise DataFormatError(f"{path} is empty after removing rows with missing values")

    target = pd.to_numeric(frame[target_column], errors='coerce')
    if target.isna().any():
        raise DataFormatError(f"Target column {target_column!r} is not numeric")

    features = frame.drop(columns=[target_column])
    categorical = [c for c in features.columns if not is_numeric_dtype(features[c])]
    if categorical:
        if categorical_policy == 'error':
            raise DataFormatError(f"Categorical columns not allowed: {categorical}")
        if categorical_policy == 'drop':
            features = features.drop(columns=categorical)
        else:
            features = pd.get_dummies(features, columns=categorical, dtype=float)

    table = LabeledTable(
        features.to_numpy(dtype=float).reshape(len(features), -1),
        target.to_numpy(dtype=float),
        tuple(str(c) for c in features.columns),
        str(target_column),
        'regression',
        n_dropped=dropped,
    )
    logger.info(f"Loaded {path.name}: {table.n_rows} rows, {table.n_features} features")
    return table


def write_csv(table, path):
    """Write features and target with a header row; values keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(table.features, columns=list(table.feature_names))
    frame[table.target_name] = table.targets
    frame.to_csv(path, index=False)
    return path


# =======================================
# IDX ingestion (MNIST-style files)
# =======================================

def _read_bytes(path):
    path = Path(path)
    if not path.exists():
        raise DatasetNotFoundError(f"IDX file not found: {path}")
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'rb') as f:
        return f.read()


def read_idx_header(path):
    """Return (magic, dims) of an IDX file, e.g. (0x803, (60000, 28, 28))."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataFormatError(f"Truncated IDX header in {path}")
    (magic,) = struct.unpack('>I', raw[:4])
    n_dims = magic & 0xFF
    if len(raw) < 4 + 4 * n_dims:
        raise DataFormatError(f"Truncated IDX header in {path}")
    dims = struct.unpack('>' + 'I' * n_dims, raw[4:4 + 4 * n_dims])
    return magic, tuple(dims)


def load_idx(images_path, labels_path):
    """
    Load an IDX image/label pair (optionally gzipped) as a classification table.

    Pixels are scaled to [0, 1] and flattened row-major.

    Raises:
        DataFormatError: bad magic number, truncated data or count mismatch.
    """
    raw_images = _read_bytes(images_path)
    raw_labels = _read_bytes(labels_path)

    if len(raw_images) < 16:
        raise DataFormatError(f"Truncated IDX image header in {images_path}")
    magic, n_images, n_rows, n_cols = struct.unpack('>IIII', raw_images[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"Bad image magic number 0x{magic:08x} in {images_path}")
    expected = n_images * n_rows * n_cols
    if len(raw_images) - 16 < expected:
        raise DataFormatError(f"Truncated image data in {images_path}")

    if len(raw_labels) < 8:
        raise DataFormatError(f"Truncated IDX label header in {labels_path}")
    magic, n_labels = struct.unpack('>II', raw_labels[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"Bad label magic number 0x{magic:08x} in {labels_path}")
    if n_labels != n_images:
        raise DataFormatError(f"Count mismatch: {n_images} images but {n_labels} labels")
    if len(raw_labels) - 8 < n_labels:
        raise DataFormatError(f"Truncated label data in {labels_path}")

    pixels = np.frombuffer(raw_images, dtype=np.uint8, count=expected, offset=16)
    pixels = pixels.reshape(n_images, n_rows * n_cols).astype(float) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8, count=n_labels, offset=8).astype(float)
    if n_labels and labels.max() > 9:
        raise DataFormatError(f"Labels must lie in 0..9, found {int(labels.max())}")

    logger.info(f"{n_images} images loaded ({n_rows}x{n_cols})")
    names = tuple(f"px{i}" for i in range(n_rows * n_cols))
    return LabeledTable(pixels, labels, names, 'label', 'classification')


def write_idx(images, labels, images_path, labels_path):
    """
    Write uint8 images (n, rows, cols) and labels as an uncompressed IDX pair.

    Float images in [0, 1] are scaled by 255 and rounded.
    """
    images = np.asarray(images)
    if images.ndim != 3:
        raise InvalidInputError(f"images must have shape (n, rows, cols), got {images.shape}")
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    labels = np.asarray(labels).astype(np.uint8)
    if len(labels) != len(images):
        raise InvalidInputError("images and labels differ in length")

    n, rows, cols = images.shape
    images_path, labels_path = Path(images_path), Path(labels_path)
    images_path.parent.mkdir(parents=True, exist_ok=True)
    labels_path.parent.mkdir(parents=True, exist_ok=True)
    with open(images_path, 'wb') as f:
        f.write(struct.pack('>IIII', IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes(order='C'))
    with open(labels_path, 'wb') as f:
        f.write(struct.pack('>II', IDX_LABELS_MAGIC, n))
        f.write(labels.tobytes())
    return images_path, labels_path


# =======================================
# In/out class splits
# =======================================

@dataclass(frozen=True)
class ClassSplitSpec:
    in_classes: tuple
    out_classes: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'in_classes', tuple(sorted(int(c) for c in self.in_classes)))
        object.__setattr__(self, 'out_classes', tuple(sorted(int(c) for c in self.out_classes)))
        if set(self.in_classes) & set(self.out_classes):
            raise InvalidInputError(f"In and out classes overlap: {set(self.in_classes) & set(self.out_classes)}")
        if not self.in_classes or not self.out_classes:
            raise InvalidInputError("Both in and out class sets must be nonempty")

    @classmethod
    def random(cls, labels, seed=0):
        """Random half/half split of the label set."""
        classes = np.unique(np.asarray(labels, dtype=int))
        perm = make_rng(seed).permutation(classes)
        half = len(classes) // 2
        return cls(tuple(perm[:half]), tuple(perm[half:]), seed)


def _subset(table, rows, targets):
    return LabeledTable(
        table.features[rows],
        np.asarray(targets, dtype=float),
        table.feature_names,
        table.target_name,
        table.task,
    )


def class_split(table, spec, test_fraction=0.2, balance=True):
    """
    Split a 10-class table into in-domain train/test pools and an out-domain test pool.

    In-domain labels are remapped to 0..len(in_classes)-1. With ``balance`` the
    out-domain pool is subsampled to the in-domain test size.

    Returns:
        tuple[LabeledTable, LabeledTable, LabeledTable]: (in_train, in_test, out_test).
    """
    labels = np.asarray(table.targets, dtype=int)
    present = set(np.unique(labels).tolist())
    declared = set(spec.in_classes) | set(spec.out_classes)
    if not present <= declared:
        raise InvalidInputError(f"Labels {sorted(present - declared)} belong to neither class set")
    if len(declared) == 10 and (len(spec.in_classes), len(spec.out_classes)) != (5, 5):
        raise InvalidInputError("10-class data requires a 5/5 class split")
    if not 0 < test_fraction < 1:
        raise InvalidInputError(f"test_fraction must be in (0, 1), got {test_fraction}")

    # test rows are taken from the front of each shuffled pool
    rng = make_rng(spec.seed)
    in_rows = rng.permutation(np.flatnonzero(np.isin(labels, spec.in_classes)))
    out_rows = rng.permutation(np.flatnonzero(np.isin(labels, spec.out_classes)))
    n_test = int(round(test_fraction * len(in_rows)))
    in_test_rows, in_train_rows = in_rows[:n_test], in_rows[n_test:]
    if balance:
        out_rows = out_rows[:n_test]

    # out-domain rows keep their original labels
    remap = {c: i for i, c in enumerate(spec.in_classes)}
    in_train = _subset(table, in_train_rows, [remap[c] for c in labels[in_train_rows]])
    in_test = _subset(table, in_test_rows, [remap[c] for c in labels[in_test_rows]])
    out_test = _subset(table, out_rows, labels[out_rows])
    logger.info(f"Class split in={spec.in_classes}: train={in_train.n_rows} in_test={in_test.n_rows} out_test={out_test.n_rows}")
    return in_train, in_test, out_test


# =======================================
# Synthetic generators
# =======================================

def gen_sinusoid(n, seed=0, noise_variance=SINUSOID_NOISE_VARIANCE, dim=SINUSOID_DIM):
    """x ~ N(0, I_dim), y = cos(10 x1) + N(0, noise_variance)."""
    if n < 0:
        raise InvalidInputError(f"n must be nonnegative, got {n}")
    rng = make_rng(seed)
    X = rng.standard_normal((n, dim))
    y = sinusoid_median(X) + rng.normal(0.0, np.sqrt(noise_variance), size=n)
    return table_from_arrays(X, y)


def sinusoid_median(X):
    """True conditional median (and mean) of the sinusoid generator."""
    return np.cos(10.0 * np.asarray(X, dtype=float)[:, 0])


def gen_gaussian_pair(spec: 'GaussianSpec', n, seed=0):
    """
    Draw n in-domain samples from N(mean, V diag(eigvals) V^T) and n out-domain
    samples from N(out_mean, V' diag(out_eigvals) V'^T).
    """
    if np.any(spec.eigvals < 0) or np.any(spec.out_eigvals < 0):
        raise InvalidInputError("Covariance is not positive semi-definite")
    rng = make_rng(seed)
    d = spec.dim
    z_in = rng.standard_normal((n, d))
    z_out = rng.standard_normal((n, d))
    x_in = spec.mean + (z_in * np.sqrt(spec.eigvals)) @ spec.eigvecs.T
    x_out = spec.out_mean + (z_out * np.sqrt(spec.out_eigvals)) @ spec.out_eigvecs.T
    return x_in, x_out


class CausalPair(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    direction: str


def _random_cubic(rng):
    a1, a2 = rng.uniform(-1.0, 1.0, size=2)
    a3 = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
    return lambda x: a3 * x ** 3 + a2 * x ** 2 + a1 * x


def _random_sigmoid(rng):
    slope = rng.uniform(0.5, 2.0)
    shift = rng.uniform(-1.0, 1.0)
    scale = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 3.0)
    return lambda x: scale * np.tanh(slope * (x - shift))


def _random_scale(rng):
    slope = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    return lambda x: 1.0 + 0.5 * np.tanh(slope * x)


def _mixture_cause(rng, n):
    n_components = int(rng.integers(1, 6))
    means = rng.uniform(-2.0, 2.0, size=n_components)
    stds = rng.uniform(0.3, 1.0, size=n_components)
    weights = rng.dirichlet(np.ones(n_components))
    component = rng.choice(n_components, size=n, p=weights)
    return rng.normal(means[component], stds[component])


def gen_causal_pair(kind, n=1000, seed=0, f=None, g=None, noise_std=None):
    """
    Synthetic cause/effect pair with known direction X -> Y.

    AN:  y = f(x) + e           (f random cubic)
    AN-S: as AN with f a random sigmoid
    LS:  y = f(x) + g(x) e      (g positive scale function)
    LS-S: as LS with f a random sigmoid
    MN:  y = f(x) e, e ~ U[0, 1] (f positive)

    x is drawn from a random Gaussian mixture; e ~ N(0, noise_std^2) unless
    stated. These mechanisms stand in for the published benchmark generators.
    """
    if kind not in CAUSAL_KINDS:
        raise InvalidInputError(f"Unknown causal kind {kind!r}; expected one of {CAUSAL_KINDS}")
    if n < 100:
        raise InvalidInputError(f"Need at least 100 samples per pair, got {n}")
    rng = make_rng(seed)
    x = _mixture_cause(rng, n)

    if kind == 'MN':
        f = f if f is not None else (lambda v, s=_random_scale(rng): 0.5 * s(v))
        e = rng.uniform(0.0, 1.0, size=n)
        return CausalPair(x, f(x) * e, 'XtoY')

    if f is None:
        f = _random_sigmoid(rng) if kind.endswith('-S') else _random_cubic(rng)
    signal = f(x)
    if noise_std is None:
        spread = float(np.std(signal))
        noise_std = rng.uniform(0.1, 0.4) * (spread if spread > 0 else 1.0)
    e = rng.normal(0.0, 1.0, size=n) * noise_std

    if kind.startswith('LS'):
        g = g if g is not None else _random_scale(rng)
        return CausalPair(x, signal + g(x) * e, 'XtoY')
    return CausalPair(x, signal + e, 'XtoY')
