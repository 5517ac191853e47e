import gzip
import struct

import numpy as np
import pytest

from uncq.certs import default_theorem_spec
from uncq.data import (
    CAUSAL_KINDS,
    ClassSplitSpec,
    assign_split,
    binarize_targets,
    class_split,
    gen_causal_pair,
    gen_gaussian_pair,
    gen_sinusoid,
    load_csv,
    load_idx,
    load_split_manifest,
    read_idx_header,
    save_split_manifest,
    sinusoid_median,
    split,
    table_from_arrays,
    write_csv,
    write_idx,
)
from uncq.errors import DataFormatError, DatasetNotFoundError, InvalidInputError


# =======================================
# CSV
# =======================================

def test_load_two_row_csv(tmp_path):
    path = tmp_path / 'tiny.csv'
    path.write_text('a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n')
    table = load_csv(path)
    assert table.features.tolist() == [[1.0, 2.0], [4.0, 5.0]]
    assert table.targets.tolist() == [3.0, 6.0]
    assert table.feature_names == ('a', 'b')
    assert table.target_name == 'y'


def test_missing_cells_are_dropped_and_counted(tmp_path):
    path = tmp_path / 'gaps.csv'
    path.write_text('a,b,y\n1,2,3\n4,?,6\n7,8,\n9,10,11\n')
    table = load_csv(path)
    assert table.n_rows == 2
    assert table.n_dropped == 2


def test_categorical_columns(tmp_path):
    path = tmp_path / 'cat.csv'
    path.write_text('sex,length,rings\nM,0.4,7\nF,0.5,9\nI,0.3,5\nM,0.6,11\n')
    onehot = load_csv(path)
    assert onehot.n_features == 4
    assert load_csv(path, categorical_policy='drop').n_features == 1
    with pytest.raises(DataFormatError):
        load_csv(path, categorical_policy='error')


def test_explicit_target_column(tmp_path):
    path = tmp_path / 't.csv'
    path.write_text('y,a\n1,2\n3,4\n')
    table = load_csv(path, target_column='y')
    assert table.targets.tolist() == [1.0, 3.0]
    with pytest.raises(InvalidInputError):
        load_csv(path, target_column='z')


def test_csv_errors(tmp_path):
    with pytest.raises(DatasetNotFoundError):
        load_csv(tmp_path / 'absent.csv')
    one_column = tmp_path / 'one.csv'
    one_column.write_text('y\n1\n2\n')
    with pytest.raises(DataFormatError):
        load_csv(one_column)
    text_target = tmp_path / 'text.csv'
    text_target.write_text('a,y\n1,low\n2,high\n')
    with pytest.raises(DataFormatError):
        load_csv(text_target)


def test_write_then_load_csv(tmp_path):
    table = gen_sinusoid(20, seed=1, dim=3)
    loaded = load_csv(write_csv(table, tmp_path / 'out' / 's.csv'))
    assert np.array_equal(loaded.features, table.features)
    assert np.array_equal(loaded.targets, table.targets)


# =======================================
# Splits and standardization
# =======================================

def test_split_sizes_for_ten_rows():
    table = split(table_from_arrays(np.arange(10.0), np.arange(10.0)), (0.8, 0.1, 0.1), seed=0)
    assert (len(table.split.train), len(table.split.val), len(table.split.test)) == (8, 1, 1)


def test_split_is_deterministic_and_disjoint():
    table = gen_sinusoid(97, seed=0, dim=2)
    a = split(table, (0.7, 0.15, 0.15), seed=4)
    b = split(table, (0.7, 0.15, 0.15), seed=4)
    assert np.array_equal(a.split.train, b.split.train)
    combined = np.concatenate([a.split.train, a.split.val, a.split.test])
    assert sorted(combined.tolist()) == list(range(97))


def test_split_gives_every_part_a_row():
    table = split(table_from_arrays(np.arange(3.0), np.arange(3.0)), (0.8, 0.1, 0.1))
    assert all(len(part) == 1 for part in (table.split.train, table.split.val, table.split.test))


def test_split_validation():
    small = table_from_arrays([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        split(small)
    with pytest.raises(InvalidInputError):
        split(gen_sinusoid(10, dim=1), (0.5, 0.5, 0.5))


def test_standardization_uses_training_rows_only():
    X = np.array([[0.0], [2.0], [100.0]])
    y = np.array([1.0, 3.0, 1000.0])
    table = assign_split(table_from_arrays(X, y), [0, 1], [], [2])
    assert table.feature_stats.provenance == 'train'
    assert table.feature_stats.mean == pytest.approx([1.0])
    assert table.target_stats.mean == pytest.approx(2.0)
    X_train, y_train = table.arrays('train')
    assert X_train[:, 0] == pytest.approx([-1.0, 1.0])
    assert y_train == pytest.approx([-1.0, 1.0])
    assert table.target_range == 2.0


def test_constant_feature_keeps_unit_scale():
    table = assign_split(table_from_arrays(np.ones((4, 1)), np.arange(4.0)), [0, 1, 2], [], [3])
    X_train, _ = table.arrays('train')
    assert np.all(X_train == 0.0)


def test_assign_split_rejects_overlap():
    table = table_from_arrays(np.arange(3.0), np.arange(3.0))
    with pytest.raises(InvalidInputError):
        assign_split(table, [0, 1], [1], [2])
    with pytest.raises(InvalidInputError):
        assign_split(table, [], [0, 1], [2])


def test_binarize_keeps_split():
    table = split(table_from_arrays(np.arange(10.0), np.arange(10.0) + 5), seed=1)
    binary = binarize_targets(table, 10.0)
    assert sorted(binary.targets.tolist()) == [0.0] * 6 + [1.0] * 4
    assert np.array_equal(binary.split.train, table.split.train)


def test_split_manifest_round_trip(tmp_path):
    table = split(gen_sinusoid(30, dim=2), seed=5)
    loaded = load_split_manifest(save_split_manifest(table, tmp_path / 'split.json'))
    assert np.array_equal(loaded.train, table.split.train)
    assert loaded.seed == 5


# =======================================
# IDX
# =======================================

def test_idx_round_trip(tmp_path):
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4) * 10
    write_idx(images, [3, 7], tmp_path / 'img', tmp_path / 'lab')

    assert read_idx_header(tmp_path / 'img') == (0x803, (2, 3, 4))
    table = load_idx(tmp_path / 'img', tmp_path / 'lab')
    assert table.task == 'classification'
    assert table.features.shape == (2, 12)
    assert table.features[1, -1] == pytest.approx(230 / 255)
    assert table.targets.tolist() == [3.0, 7.0]


def test_idx_reads_gzip(tmp_path):
    write_idx(np.zeros((1, 2, 2), dtype=np.uint8), [1], tmp_path / 'img', tmp_path / 'lab')
    for name in ('img', 'lab'):
        (tmp_path / f"{name}.gz").write_bytes(gzip.compress((tmp_path / name).read_bytes()))
    assert load_idx(tmp_path / 'img.gz', tmp_path / 'lab.gz').n_rows == 1


def test_idx_rejects_bad_files(tmp_path):
    write_idx(np.zeros((2, 2, 2), dtype=np.uint8), [0, 1], tmp_path / 'img', tmp_path / 'lab')

    bad_magic = tmp_path / 'bad'
    bad_magic.write_bytes(struct.pack('>IIII', 0x801, 2, 2, 2) + bytes(8))
    with pytest.raises(DataFormatError):
        load_idx(bad_magic, tmp_path / 'lab')

    truncated = tmp_path / 'short'
    truncated.write_bytes((tmp_path / 'img').read_bytes()[:-1])
    with pytest.raises(DataFormatError):
        load_idx(truncated, tmp_path / 'lab')

    write_idx(np.zeros((3, 2, 2), dtype=np.uint8), [0, 1, 2], tmp_path / 'img3', tmp_path / 'lab3')
    with pytest.raises(DataFormatError):
        load_idx(tmp_path / 'img', tmp_path / 'lab3')

    with pytest.raises(DatasetNotFoundError):
        load_idx(tmp_path / 'nothing', tmp_path / 'lab')


def test_idx_rejects_label_above_nine(tmp_path):
    write_idx(np.zeros((1, 2, 2), dtype=np.uint8), [12], tmp_path / 'img', tmp_path / 'lab')
    with pytest.raises(DataFormatError):
        load_idx(tmp_path / 'img', tmp_path / 'lab')


# =======================================
# Class splits
# =======================================

def ten_class_table(per_class=20):
    labels = np.repeat(np.arange(10), per_class)
    features = np.column_stack([labels, np.arange(len(labels))]).astype(float)
    return table_from_arrays(features, labels, task='classification')


def test_class_split_partitions_classes():
    table = ten_class_table()
    spec = ClassSplitSpec((0, 2, 4, 6, 8), (1, 3, 5, 7, 9), seed=1)
    in_train, in_test, out_test = class_split(table, spec)

    assert set(np.unique(in_train.targets)) == {0, 1, 2, 3, 4}
    assert set(in_train.features[:, 0].astype(int)) <= {0, 2, 4, 6, 8}
    assert set(out_test.targets.astype(int)) <= {1, 3, 5, 7, 9}
    assert in_train.n_rows + in_test.n_rows == 100
    assert out_test.n_rows == in_test.n_rows == 20
    rows = np.concatenate([in_train.features[:, 1], in_test.features[:, 1]])
    assert len(set(rows.tolist())) == 100


def test_class_split_requires_five_five():
    with pytest.raises(InvalidInputError):
        class_split(ten_class_table(), ClassSplitSpec((0, 1, 2, 3), (4, 5, 6, 7, 8, 9)))


def test_class_split_spec_validation():
    with pytest.raises(InvalidInputError):
        ClassSplitSpec((0, 1), (1, 2))
    spec = ClassSplitSpec.random(np.arange(10), seed=3)
    assert len(spec.in_classes) == len(spec.out_classes) == 5
    assert spec == ClassSplitSpec.random(np.arange(10), seed=3)


# =======================================
# Generators
# =======================================

def test_sinusoid_is_reproducible_and_bounded():
    a = gen_sinusoid(1000, seed=8)
    b = gen_sinusoid(1000, seed=8)
    assert np.array_equal(a.features, b.features)
    assert a.features.shape == (1000, 10)
    sigma = np.sqrt(1 / 3)
    assert np.all(np.abs(a.targets) <= 1 + 5 * sigma)
    residual = a.targets - sinusoid_median(a.features)
    assert np.var(residual) == pytest.approx(1 / 3, rel=0.15)


def test_sinusoid_allows_empty_draw():
    assert gen_sinusoid(0).n_rows == 0
    with pytest.raises(InvalidInputError):
        gen_sinusoid(-1)


def test_gaussian_pair_covariances():
    spec = default_theorem_spec()
    x_in, x_out = gen_gaussian_pair(spec, 50_000, seed=2)
    cov_in = spec.eigvecs @ np.diag(spec.eigvals) @ spec.eigvecs.T
    assert np.cov(x_in.T) == pytest.approx(cov_in, abs=0.03)
    assert x_out.shape == (50_000, 4)


@pytest.mark.parametrize('kind', CAUSAL_KINDS)
def test_causal_pairs(kind):
    pair = gen_causal_pair(kind, n=300, seed=4)
    assert pair.direction == 'XtoY'
    assert pair.x.shape == pair.y.shape == (300,)
    assert np.all(np.isfinite(pair.y))
    again = gen_causal_pair(kind, n=300, seed=4)
    assert np.array_equal(pair.y, again.y)


def test_causal_pair_with_fixed_mechanism():
    pair = gen_causal_pair('AN', n=100, seed=0, f=lambda v: 2 * v, noise_std=0.0)
    assert pair.y == pytest.approx(2 * pair.x)


def test_causal_pair_validation():
    with pytest.raises(InvalidInputError):
        gen_causal_pair('XX')
    with pytest.raises(InvalidInputError):
        gen_causal_pair('AN', n=50)
