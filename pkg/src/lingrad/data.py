"""Datasets: the synthetic teacher task, MNIST IDX files and evaluation metrics."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .net import Network, forward, random_network

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATASET_MAGIC = b"LRD1"

# Order matters: changing it changes every seeded result.
STREAM_NAMES = ("teacher", "inputs", "init", "shuffle")


def rng_streams(seed: int) -> dict:
    """Independent PCG64 generators for each consumer, all from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.PCG64(s))
            for name, s in zip(STREAM_NAMES, children)}


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (N x m_0) and targets ``Y`` (N x m_I)."""

    X: np.ndarray
    Y: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise DataFormatError(f"bad dataset shapes {X.shape} and {Y.shape}")
        if X.shape[0] == 0:
            raise DataFormatError("dataset is empty")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def samples(self) -> list:
        return [Sample(x, y) for x, y in zip(self.X, self.Y)]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.provenance)


def generate_teacher_dataset(widths=(50, 50, 50, 50), n_train=50_000, n_test=10_000,
                             seed=0, zero_teacher=False):
    """Targets produced by a frozen random network fed standard-normal inputs.

    Returns ``(train, test, teacher)``.  ``zero_teacher`` zeroes every teacher
    parameter (a test hook).
    """
    if len(widths) < 2 or min(widths) < 1:
        raise ValueError(f"invalid widths {widths}")
    if n_train < 1 or n_test < 1:
        raise ValueError("sample counts must be at least 1")
    streams = rng_streams(seed)
    teacher = random_network(widths, streams["teacher"])
    if zero_teacher:
        teacher = teacher.with_params(teacher.params.zeros_like())
    X = streams["inputs"].standard_normal((n_train + n_test, widths[0]))
    Y = forward(teacher, X).output
    tag = f"teacher:seed={seed}"
    return (Dataset(X[:n_train], Y[:n_train], tag),
            Dataset(X[n_train:], Y[n_train:], tag), teacher)


# ------------------------------------------------------------------- IDX / MNIST

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{path}: bad image magic {magic:#010x}")
    size = n * rows * cols
    if len(raw) - 16 < size:
        raise DataFormatError(f"{path}: expected {size} pixel bytes, found {len(raw) - 16}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad label magic {magic:#010x}")
    if len(raw) - 8 < n:
        raise DataFormatError(f"{path}: expected {n} labels, found {len(raw) - 8}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8)


def one_hot(labels, n_classes=10) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Pixels scaled to [0, 1] and flattened; labels one-hot over 10 classes."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"label {labels.max()} outside 0..9")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, one_hot(labels), f"idx:{images_path}")


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


# ----------------------------------------------------------- dataset container

def save_dataset(path, ds: Dataset) -> None:
    """``LRD1``, u64 sample count, u32 input and target widths, then X and Y
    row-major as little-endian float64."""
    n, m_in = ds.X.shape
    m_out = ds.Y.shape[1]
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<QII", n, m_in, m_out))
        fh.write(ds.X.astype("<f8").tobytes())
        fh.write(ds.Y.astype("<f8").tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise DataFormatError(f"{path}: not an LRD1 dataset")
    if len(raw) < 20:
        raise DataFormatError(f"{path}: truncated header")
    n, m_in, m_out = struct.unpack("<QII", raw[4:20])
    expected = 20 + 8 * n * (m_in + m_out)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    X = np.frombuffer(raw, "<f8", n * m_in, 20).reshape(n, m_in)
    Y = np.frombuffer(raw, "<f8", n * m_out, 20 + 8 * n * m_in).reshape(n, m_out)
    return Dataset(X.astype(np.float64), Y.astype(np.float64), f"file:{path}")


# --------------------------------------------------------------------- metrics

def metric_normalized_distance(net: Network, ds: Dataset) -> float:
    out = forward(net, ds.X).output
    dist = np.sqrt(np.sum((out - ds.Y) ** 2, axis=1)) / np.sqrt(out.shape[1])
    return float(dist.mean())


def metric_classification_error(net: Network, ds: Dataset) -> float:
    """Fraction misclassified; argmax ties go to the lowest index."""
    out = forward(net, ds.X).output
    return float(np.mean(np.argmax(out, axis=1) != np.argmax(ds.Y, axis=1)))


METRICS = {
    "distance": metric_normalized_distance,
    "classification": metric_classification_error,
}
