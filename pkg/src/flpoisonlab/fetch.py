"""Download the reference datasets into the data root and verify them.

Layout under ``data_root()``::

    mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
    fashion_mnist/...   (same names)
    cifar10/cifar-10-binary.tar.gz + cifar-10-batches-bin/*.bin
"""

from __future__ import annotations

import hashlib
import logging
import shutil
import tarfile
import tempfile
import urllib.request
from pathlib import Path

from .data import data_root
from .errors import ConfigError, DataFormatError

logger = logging.getLogger(__name__)

IDX_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

# MD5 of the published gzip files, in IDX_FILES order.
GZ_MD5 = {
    "mnist": (
        "f68b3c2dcbeaaa9fbdd348bbdeb94873",
        "d53e105ee54ea40749a09fcbcd1e9432",
        "9fb629c4189551a2d022fa330f9573f3",
        "ec29112dd5afa0611ce80d1b7f02629c",
    ),
    "fashion_mnist": (
        "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
        "25c81989df183df01b3e8a0aad5dffbe",
        "bef4ecab320f06d8554ea6380940ec79",
        "bb300cfdad3c16e7a12a480ee83cd310",
    ),
}

# MD5 of the decompressed MNIST files, in IDX_FILES order.
RAW_MD5 = {
    "mnist": (
        "6bbc9ace898e44ae57da46a324031adb",
        "a25bea736e30d166cdddb491f175f624",
        "2646ac647ad5339dbf082846283269ea",
        "27ae3e4e09519cfbb04c329615203637",
    ),
}

MIRRORS = {
    "mnist": ("https://ossci-datasets.s3.amazonaws.com/mnist/", "https://yann.lecun.com/exdb/mnist/"),
    "fashion_mnist": ("https://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",),
}
# The npm package ships the four decompressed MNIST files under package/data/.
MNIST_NPM = "https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz"

CIFAR_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
CIFAR_ARCHIVE = "cifar-10-binary.tar.gz"
CIFAR_MD5 = "c32a1d4ab5d03f1284b67883e8d87530"

DATASETS = ("mnist", "fashion_mnist", "cifar10")


def md5sum(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _download(url: str, dest: Path) -> None:
    logger.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=60) as resp, open(dest, "wb") as fh:
        shutil.copyfileobj(resp, fh)


def verify(name: str, root: Path | None = None) -> dict[str, bool | None]:
    """Check every file of ``name`` against its published digest.

    Maps file name to True (match), False (mismatch) or None (present but
    no published digest for that form, or missing).
    """
    root = Path(root) if root is not None else data_root()
    if name == "cifar10":
        archive = root / "cifar10" / CIFAR_ARCHIVE
        return {CIFAR_ARCHIVE: (md5sum(archive) == CIFAR_MD5) if archive.exists() else None}
    if name not in GZ_MD5:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {DATASETS}")
    out: dict[str, bool | None] = {}
    for i, fname in enumerate(IDX_FILES):
        gz = root / name / f"{fname}.gz"
        raw = root / name / fname
        if gz.exists():
            out[fname] = md5sum(gz) == GZ_MD5[name][i]
        elif raw.exists() and name in RAW_MD5:
            out[fname] = md5sum(raw) == RAW_MD5[name][i]
        else:
            out[fname] = None
    return out


def _fetch_idx(name: str, root: Path) -> None:
    target = root / name
    target.mkdir(parents=True, exist_ok=True)
    last_error: Exception | None = None
    for base in MIRRORS[name]:
        try:
            for i, fname in enumerate(IDX_FILES):
                dest = target / f"{fname}.gz"
                if dest.exists() and md5sum(dest) == GZ_MD5[name][i]:
                    continue
                _download(base + fname + ".gz", dest)
                if md5sum(dest) != GZ_MD5[name][i]:
                    dest.unlink()
                    raise DataFormatError(f"checksum mismatch for {fname}.gz from {base}")
            return
        except (OSError, DataFormatError) as exc:
            logger.warning("mirror %s failed: %s", base, exc)
            last_error = exc
    if name == "mnist":
        _fetch_mnist_npm(target)
        return
    raise DataFormatError(f"could not download {name}: {last_error}")


def _fetch_mnist_npm(target: Path) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        archive = Path(tmp) / "mnist.tgz"
        _download(MNIST_NPM, archive)
        with tarfile.open(archive) as tar:
            for i, fname in enumerate(IDX_FILES):
                member = tar.extractfile(f"package/data/{fname}")
                if member is None:
                    raise DataFormatError(f"{fname} missing from {MNIST_NPM}")
                dest = target / fname
                with open(dest, "wb") as fh:
                    shutil.copyfileobj(member, fh)
                if md5sum(dest) != RAW_MD5["mnist"][i]:
                    dest.unlink()
                    raise DataFormatError(f"checksum mismatch for {fname} from {MNIST_NPM}")


def _fetch_cifar(root: Path) -> None:
    target = root / "cifar10"
    target.mkdir(parents=True, exist_ok=True)
    archive = target / CIFAR_ARCHIVE
    if not (archive.exists() and md5sum(archive) == CIFAR_MD5):
        _download(CIFAR_URL, archive)
        if md5sum(archive) != CIFAR_MD5:
            raise DataFormatError(f"checksum mismatch for {CIFAR_ARCHIVE}")
    with tarfile.open(archive) as tar:
        tar.extractall(target, filter="data")


def fetch(name: str, root: Path | None = None) -> Path:
    """Download ``name`` unless it is already present and verified."""
    if name not in DATASETS:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {DATASETS}")
    root = Path(root) if root is not None else data_root()
    status = verify(name, root)
    if status and all(v is True for v in status.values()):
        logger.info("%s already present and verified under %s", name, root)
        return root / name
    if name == "cifar10":
        _fetch_cifar(root)
    else:
        _fetch_idx(name, root)
    return root / name
