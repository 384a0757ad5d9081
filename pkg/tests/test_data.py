import gzip
import struct

import numpy as np
import pytest

from conftest import has_idx, real_data_root
from flpoisonlab.data import (
    CIFAR_RECORD,
    DATA_DIR_ENV,
    Dataset,
    PartitionPlan,
    Sample,
    data_root,
    generate_synthetic,
    load_cifar10,
    load_idx,
    load_named,
    partition,
    synthetic_split,
    write_idx,
)
from flpoisonlab.errors import ConfigError, ContractViolation, DataFormatError


def _idx_pair(tmp_path, n=4, rows=2, cols=3):
    img = tmp_path / "img"
    lab = tmp_path / "lab"
    pixels = (np.arange(n * rows * cols) % 256).astype(np.uint8)
    img.write_bytes(struct.pack(">IIII", 0x803, n, rows, cols) + pixels.tobytes())
    lab.write_bytes(struct.pack(">II", 0x801, n) + bytes(range(n)))
    return img, lab, pixels


# ------------------------------------------------------------------ IDX


def test_load_idx_hand_built_fixture(tmp_path):
    img, lab, pixels = _idx_pair(tmp_path)
    ds = load_idx(img, lab)
    assert len(ds) == 4 and ds.dim == 6
    assert ds.labels.tolist() == [0, 1, 2, 3]
    assert np.array_equal(ds.features.ravel(), pixels / 255.0)


def test_load_idx_gzip(tmp_path):
    img, lab, _ = _idx_pair(tmp_path)
    gz = tmp_path / "img.gz"
    gz.write_bytes(gzip.compress(img.read_bytes()))
    assert len(load_idx(gz, lab)) == 4


def test_load_idx_bad_magic_reports_both_values(tmp_path):
    img, lab, _ = _idx_pair(tmp_path)
    buf = bytearray(img.read_bytes())
    buf[3] = 0x01
    img.write_bytes(bytes(buf))
    with pytest.raises(DataFormatError, match="expected 0x00000803, found 0x00000801"):
        load_idx(img, lab)


def test_load_idx_truncated_reports_offset(tmp_path):
    img, lab, _ = _idx_pair(tmp_path)
    img.write_bytes(img.read_bytes()[:-5])
    with pytest.raises(DataFormatError, match="byte offset 35"):
        load_idx(img, lab)


def test_load_idx_truncated_header(tmp_path):
    img, lab, _ = _idx_pair(tmp_path)
    img.write_bytes(img.read_bytes()[:7])
    with pytest.raises(DataFormatError, match="truncated header"):
        load_idx(img, lab)


def test_load_idx_count_mismatch(tmp_path):
    img, lab, _ = _idx_pair(tmp_path)
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
    with pytest.raises(DataFormatError, match="label count 3 does not match image count 4"):
        load_idx(img, lab)


def test_load_idx_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="missing"):
        load_idx(tmp_path / "nope", tmp_path / "nope2")


def test_idx_round_trip_within_quantisation(tmp_path):
    ds = generate_synthetic(3, 12, 10, seed=2)
    write_idx(tmp_path / "i", tmp_path / "l", ds, 3, 4)
    back = load_idx(tmp_path / "i", tmp_path / "l", num_classes=3)
    assert np.array_equal(back.labels, ds.labels)
    assert np.max(np.abs(back.features - ds.features)) <= 0.5 / 255 + 1e-12


# ---------------------------------------------------------------- CIFAR


def _cifar_records(labels):
    out = bytearray()
    for i, lab in enumerate(labels):
        out.append(lab)
        out += bytes([(i * 7 + c) % 256 for c in range(CIFAR_RECORD - 1)])
    return bytes(out)


def test_load_cifar_fixture(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(_cifar_records([3, 9]))
    ds = load_cifar10([p, p])
    assert len(ds) == 4 and ds.dim == 3072
    assert ds.labels.tolist() == [3, 9, 3, 9]
    assert ds.features[1, 0] == pytest.approx(7 / 255)


def test_load_cifar_misaligned(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(_cifar_records([1, 2]) + b"\x00" * 10)
    with pytest.raises(DataFormatError, match="misaligned at record 2"):
        load_cifar10([p])


def test_load_cifar_bad_label(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(_cifar_records([1, 12]))
    with pytest.raises(DataFormatError, match="label byte 12 > 9 at record 1"):
        load_cifar10([p])


# ------------------------------------------------------------ synthetic


def test_synthetic_shape_balance_and_range():
    ds = generate_synthetic(4, 10, 25, seed=0)
    assert len(ds) == 100 and ds.dim == 10
    assert np.bincount(ds.labels).tolist() == [25] * 4
    assert ds.features.min() >= 0 and ds.features.max() <= 1


def test_synthetic_deterministic_and_seed_sensitive():
    a = generate_synthetic(3, 5, 10, seed=1)
    b = generate_synthetic(3, 5, 10, seed=1)
    c = generate_synthetic(3, 5, 10, seed=2)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_synthetic_split_shares_centres():
    train, test = synthetic_split(2, 30, 300, 300, seed=3)
    for c in range(2):
        mu_tr = train.features[train.labels == c].mean(axis=0)
        mu_te = test.features[test.labels == c].mean(axis=0)
        assert np.linalg.norm(mu_tr - mu_te) < 0.1


def test_synthetic_rejects_degenerate():
    with pytest.raises(ContractViolation):
        generate_synthetic(1, 5, 10, seed=0)


def test_dataset_samples_round_trip():
    ds = generate_synthetic(2, 4, 3, seed=0)
    back = Dataset.from_samples(list(ds), 2)
    assert isinstance(ds[0], Sample)
    assert np.array_equal(back.features, ds.features)


# ------------------------------------------------------------ partition


def test_iid_partition_disjoint_sized_and_stratified():
    pool = generate_synthetic(3, 4, 100, seed=0)
    clients = partition(pool, PartitionPlan(4, 60, "iid", 7), pool)
    seen = np.concatenate([c.train_index for c in clients])
    assert len(set(seen.tolist())) == seen.size == 240
    for c in clients:
        assert c.size == 60
        assert np.bincount(c.train.labels, minlength=3).tolist() == [20, 20, 20]


def test_label_shard_gives_two_labels_each():
    pool = generate_synthetic(10, 4, 50, seed=0)
    clients = partition(pool, PartitionPlan(5, 40, "label-shard", 1), pool)
    for c in clients:
        assert len(np.unique(c.train.labels)) == 2
        assert c.size == 40


def test_partition_deterministic():
    pool = generate_synthetic(3, 4, 50, seed=0)
    a = partition(pool, PartitionPlan(3, 30, "iid", 4), pool)
    b = partition(pool, PartitionPlan(3, 30, "iid", 4), pool)
    assert all(np.array_equal(x.train_index, y.train_index) for x, y in zip(a, b))


def test_partition_insufficient_samples():
    pool = generate_synthetic(2, 4, 10, seed=0)
    with pytest.raises(ConfigError, match="needs 30 samples"):
        partition(pool, PartitionPlan(3, 10, "iid", 0), pool)


def test_partition_rejects_unknown_scheme():
    with pytest.raises(ConfigError):
        PartitionPlan(2, 10, "dirichlet")


# --------------------------------------------------------- named loaders


def test_data_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    assert data_root() == tmp_path


def test_load_named_missing_points_at_fetch(tmp_path):
    with pytest.raises(DataFormatError, match="fetch-data"):
        load_named("mnist", tmp_path)


def test_load_named_unknown():
    with pytest.raises(ConfigError):
        load_named("svhn")


@pytest.mark.skipif(not has_idx("mnist"), reason="MNIST not present under the data root")
def test_real_mnist_counts():
    train, test = load_named("mnist", real_data_root())
    assert (len(train), len(test)) == (60000, 10000)
    assert train.dim == 784
    assert train.labels[:5].tolist() == [5, 0, 4, 1, 9]
    assert test.labels[:5].tolist() == [7, 2, 1, 0, 4]
