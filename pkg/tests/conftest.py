import os
from pathlib import Path

import numpy as np
import pytest

from flpoisonlab.data import DATA_DIR_ENV, Dataset, PartitionPlan, partition, synthetic_split


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_split():
    """Three-class, 12-dim blobs: small enough for sub-second federations."""
    return synthetic_split(3, 12, 200, 60, seed=5)


@pytest.fixture(scope="session")
def small_clients(small_split):
    train, test = small_split
    return partition(train, PartitionPlan(5, 90, "iid", 0), test), test


def real_data_root() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "flpoisonlab"))


def has_idx(name: str) -> bool:
    base = real_data_root() / name
    return all(
        (base / f).exists() or (base / f"{f}.gz").exists()
        for f in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                  "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    )


def has_cifar() -> bool:
    base = real_data_root() / "cifar10" / "cifar-10-batches-bin"
    return (base / "test_batch.bin").exists() and all(
        (base / f"data_batch_{i}.bin").exists() for i in range(1, 6))


def tiny_dataset(features, labels, classes) -> Dataset:
    return Dataset(np.asarray(features, dtype=np.float64), np.asarray(labels, dtype=np.int64), classes)


# ------------------------------------------------------ acceptance report

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
