import os
from pathlib import Path

import numpy as np
import pytest

from uncq.data import gen_sinusoid, split, table_from_arrays
from uncq.net import make_rng


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run desk-scale acceptance tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def sinusoid_table():
    return split(gen_sinusoid(600, seed=3), (0.8, 0.1, 0.1), seed=3)


@pytest.fixture
def gaussian_noise_table():
    """y ~ N(0, 1) independent of two uniform features."""
    r = make_rng(7)
    X = r.uniform(-1.0, 1.0, size=(10_000, 2))
    y = r.standard_normal(10_000)
    return split(table_from_arrays(X, y), (0.8, 0.1, 0.1), seed=7)


@pytest.fixture
def dataset_file():
    """Resolve a file under UNCQ_DATA_DIR, skipping the test when it is absent."""
    root = os.getenv('UNCQ_DATA_DIR')

    def resolve(*names):
        if not root:
            pytest.skip('UNCQ_DATA_DIR is not set')
        for name in names:
            path = Path(root) / name
            if path.is_file():
                return path
        pytest.skip(f"none of {names} found under {root}")
    return resolve


@pytest.fixture
def relative_error():
    """|a - n| / max(1e-4, |a| + |n|), elementwise."""
    def compute(analytic, numeric):
        analytic = np.asarray(analytic, dtype=float)
        numeric = np.asarray(numeric, dtype=float)
        return np.abs(analytic - numeric) / np.maximum(1e-4, np.abs(analytic) + np.abs(numeric))
    return compute


