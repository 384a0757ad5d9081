"""Dataset ingestion, synthetic blobs and client partitioning.

Samples are stored column-wise as a feature matrix plus a label vector
(``Dataset``); indexing a dataset yields individual ``Sample`` records.
Supported on-disk formats are IDX (MNIST, FashionMNIST, optionally
gzipped) and the CIFAR-10 binary batch format.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation, DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072

DATA_DIR_ENV = "FLPL_DATA_DIR"


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, dim), float64 in [0, 1]
    labels: np.ndarray  # (n,), int64
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ContractViolation(
                f"features {self.features.shape} and labels {self.labels.shape} misaligned"
            )

    def __len__(self) -> int:
        return self.labels.size

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], num_classes: int | None = None) -> "Dataset":
        if not samples:
            raise ContractViolation("cannot build a dataset from zero samples")
        x = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(x, y, num_classes or int(y.max()) + 1)


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    train: Dataset
    test: Dataset
    train_index: np.ndarray  # rows of the source pool, for disjointness checks

    @property
    def size(self) -> int:
        return len(self.train)


@dataclass(frozen=True)
class PartitionPlan:
    client_count: int
    samples_per_client: int
    scheme: str = "iid"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("iid", "label-shard"):
            raise ConfigError(f"unknown partition scheme {self.scheme!r}")
        if self.client_count < 1 or self.samples_per_client < 1:
            raise ConfigError("client_count and samples_per_client must be positive")


# --------------------------------------------------------------------------- IDX


def _open_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"missing data file: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(buf: bytes, path, magic: int, ndims: int) -> tuple[int, ...]:
    need = 4 * (1 + ndims)
    if len(buf) < need:
        raise DataFormatError(f"{path}: truncated header at byte offset {len(buf)} (need {need})")
    found = struct.unpack(">I", buf[:4])[0]
    if found != magic:
        raise DataFormatError(f"{path}: bad IDX magic, expected 0x{magic:08x}, found 0x{found:08x}")
    return struct.unpack(f">{ndims}I", buf[4:need])


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled by 1/255."""
    img = _open_bytes(images_path)
    count, rows, cols = _idx_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    expected = 16 + count * rows * cols
    if len(img) < expected:
        raise DataFormatError(
            f"{images_path}: truncated at byte offset {len(img)}, header promises {expected} bytes"
        )
    lab = _open_bytes(labels_path)
    (n_labels,) = _idx_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if len(lab) < 8 + n_labels:
        raise DataFormatError(
            f"{labels_path}: truncated at byte offset {len(lab)}, header promises {8 + n_labels} bytes"
        )
    if n_labels != count:
        raise DataFormatError(f"label count {n_labels} does not match image count {count}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=count * rows * cols, offset=16)
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if count and labels.max() >= num_classes:
        raise DataFormatError(f"{labels_path}: label {labels.max()} >= {num_classes}")
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels, num_classes)


def write_idx(images_path, labels_path, data: Dataset, rows: int, cols: int) -> None:
    """Quantise ``data`` to bytes and write it as an uncompressed IDX pair."""
    if rows * cols != data.dim:
        raise ContractViolation(f"{rows}x{cols} does not match feature dim {data.dim}")
    n = len(data)
    pix = np.clip(np.rint(data.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(pix.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(data.labels.astype(np.uint8).tobytes())


# ------------------------------------------------------------------------ CIFAR


def load_cifar10(batch_paths: Sequence) -> Dataset:
    """Read CIFAR-10 binary batches (label byte, then R, G, B planes)."""
    feats, labels = [], []
    for path in batch_paths:
        buf = _open_bytes(path)
        if len(buf) % CIFAR_RECORD:
            rec = len(buf) // CIFAR_RECORD
            raise DataFormatError(
                f"{path}: size {len(buf)} is not a multiple of {CIFAR_RECORD} "
                f"(misaligned at record {rec})"
            )
        raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        bad = np.flatnonzero(raw[:, 0] > 9)
        if bad.size:
            raise DataFormatError(f"{path}: label byte {raw[bad[0], 0]} > 9 at record {bad[0]}")
        labels.append(raw[:, 0].astype(np.int64))
        feats.append(raw[:, 1:].astype(np.float64) / 255.0)
    if not feats:
        raise ContractViolation("no CIFAR-10 batch files given")
    return Dataset(np.concatenate(feats), np.concatenate(labels), 10)


# -------------------------------------------------------------------- synthetic


def class_centers(classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm class centres as spread apart as possible.

    With ``dim > classes`` the centres form a randomly rotated regular
    simplex (two classes are antipodal) inside the subspace orthogonal to
    the all-ones vector, so the [0, 1] shift adds no class-dependent offset.
    Otherwise they are random unit directions.
    """
    if dim > classes:
        g = rng.standard_normal((dim, classes))
        basis, _ = np.linalg.qr(g - g.mean(axis=0))
        centers = basis.T - basis.T.mean(axis=0)
    else:
        centers = rng.standard_normal((classes, dim))
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def generate_synthetic(classes: int, dim: int, per_class: int, seed: int, sigma: float = 0.5) -> Dataset:
    """Isotropic Gaussian blobs mapped into [0, 1] by ``clip(0.5 + x / 4)``."""
    return _blobs(classes, dim, per_class, seed, seed, sigma)


def synthetic_split(classes: int, dim: int, per_class_train: int, per_class_test: int, seed: int,
                    sigma: float = 0.5):
    """Train and test pools drawn around the same centres with independent noise."""
    train = _blobs(classes, dim, per_class_train, seed, seed, sigma)
    test = _blobs(classes, dim, per_class_test, seed, seed + 7919, sigma)
    return train, test


def _blobs(classes, dim, per_class, center_seed, sample_seed, sigma) -> Dataset:
    if classes < 2 or dim < 2:
        raise ContractViolation(f"synthetic data needs classes >= 2 and dim >= 2, got {classes}, {dim}")
    if per_class < 1:
        raise ContractViolation("per_class must be positive")
    centers = class_centers(classes, dim, np.random.default_rng([center_seed, 0]))
    rng = np.random.default_rng([sample_seed, 1])
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    raw = centers[labels] + sigma * rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)
    features = np.clip(0.5 + 0.25 * raw[order], 0.0, 1.0)
    return Dataset(features, labels[order], classes)


# ------------------------------------------------------------------- partition


def _quotas(proportions: np.ndarray, total: int) -> np.ndarray:
    raw = proportions * total
    q = np.floor(raw).astype(np.int64)
    short = total - int(q.sum())
    if short:
        order = np.argsort(-(raw - q), kind="stable")
        q[order[:short]] += 1
    return q


def partition(pool: Dataset, plan: PartitionPlan, test: Dataset) -> list[ClientDataset]:
    """Split ``pool`` into disjoint per-client training sets.

    ``iid`` is stratified so every client mirrors the pool's label
    proportions; ``label-shard`` gives each client exactly two labels.
    All clients share ``test`` as their evaluation holdout.
    """
    need = plan.client_count * plan.samples_per_client
    if need > len(pool):
        raise ConfigError(
            f"partition needs {need} samples ({plan.client_count} x {plan.samples_per_client}), "
            f"pool has {len(pool)}"
        )
    rng = np.random.default_rng([plan.seed, 2])
    by_class = [rng.permutation(np.flatnonzero(pool.labels == c)) for c in range(pool.num_classes)]
    cursor = [0] * pool.num_classes

    def take(c: int, n: int) -> np.ndarray:
        if cursor[c] + n > by_class[c].size:
            raise ConfigError(f"not enough samples of label {c} for the requested partition")
        out = by_class[c][cursor[c] : cursor[c] + n]
        cursor[c] += n
        return out

    assignments = []
    if plan.scheme == "iid":
        props = np.array([b.size for b in by_class], dtype=np.float64) / len(pool)
        quota = _quotas(props, plan.samples_per_client)
        for _ in range(plan.client_count):
            idx = np.concatenate([take(c, int(q)) for c, q in enumerate(quota) if q])
            assignments.append(np.sort(idx))
    else:
        present = [c for c in range(pool.num_classes) if by_class[c].size]
        label_order = rng.permutation(present)
        half = plan.samples_per_client // 2
        for i in range(plan.client_count):
            a = int(label_order[(2 * i) % len(label_order)])
            b = int(label_order[(2 * i + 1) % len(label_order)])
            if a == b:
                idx = take(a, plan.samples_per_client)
            else:
                idx = np.concatenate([take(a, plan.samples_per_client - half), take(b, half)])
            assignments.append(np.sort(idx))
    return [
        ClientDataset(client_id=i, train=pool.subset(idx), test=test, train_index=idx)
        for i, idx in enumerate(assignments)
    ]


# ------------------------------------------------------------ named datasets


def data_root() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "flpoisonlab"))


def _first_existing(base: Path, name: str) -> Path:
    for cand in (base / name, base / f"{name}.gz"):
        if cand.exists():
            return cand
    raise DataFormatError(f"missing data file {base / name} (run `flpoisonlab fetch-data`)")


def load_named(name: str, root: Path | None = None) -> tuple[Dataset, Dataset]:
    """Load the official (train, test) split of ``mnist``, ``fashion_mnist`` or ``cifar10``."""
    root = Path(root) if root is not None else data_root()
    if name in ("mnist", "fashion_mnist"):
        base = root / name
        train = load_idx(
            _first_existing(base, "train-images-idx3-ubyte"),
            _first_existing(base, "train-labels-idx1-ubyte"),
        )
        test = load_idx(
            _first_existing(base, "t10k-images-idx3-ubyte"),
            _first_existing(base, "t10k-labels-idx1-ubyte"),
        )
        return train, test
    if name == "cifar10":
        base = root / "cifar10" / "cifar-10-batches-bin"
        train = load_cifar10([_first_existing(base, f"data_batch_{i}.bin") for i in range(1, 6)])
        test = load_cifar10([_first_existing(base, "test_batch.bin")])
        return train, test
    raise ConfigError(f"unknown dataset {name!r}")
