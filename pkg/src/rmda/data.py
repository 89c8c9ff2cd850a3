"""Datasets: structured-sparse synthetic problems, MNIST IDX files, minibatches."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GroupPartition, ParamVector, StructureError
from . import models


class DataError(ValueError):
    pass


class MarginTooLargeError(DataError):
    pass


class IdxFormatError(DataError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    classes: int
    ground_truth: ParamVector | None = None
    truth_pattern: np.ndarray | None = None
    partition: GroupPartition | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        n = self.inputs.shape[0]
        if self.inputs.ndim != 2 or n < 1:
            raise DataError("inputs must be a nonempty (n, d) matrix")
        if self.labels.shape != (n,):
            raise DataError("one label per input row is required")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise DataError("label out of range")
        if not np.all(np.isfinite(self.inputs)):
            raise DataError("inputs must be finite")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.classes,
                       self.ground_truth, self.truth_pattern, self.partition)


def contiguous_groups(dim: int, n_groups: int) -> GroupPartition:
    """Split ``range(dim)`` into ``n_groups`` consecutive blocks."""
    return GroupPartition(np.array_split(np.arange(dim), n_groups), dim=dim)


def gen_synthetic(in_dim: int, partition: GroupPartition, zero_fraction: float, n: int,
                  margin: float = 0.5, seed: int = 0, *, model=None,
                  classes: int = 2) -> Dataset:
    """Structured-sparse ground truth and data it separates with a margin.

    The ground truth ``W*`` has ``ceil(zero_fraction * |G|)`` groups set to
    exactly zero (chosen at random) and standard normal entries elsewhere;
    biases are zero. Inputs are i.i.d. standard normal and a draw is kept
    only if its top-two logit gap under ``W*`` is at least ``margin`` (for a
    binary logistic model that is ``|W*.x| >= margin``). Labels are the
    ``W*`` argmax. For networks with hidden layers, weights leaving units
    that never fire on the sample are zeroed as well, so groups made of
    them count as zero in the recorded pattern.

    ``partition`` indexes the model's parameter vector. A partition built
    for ``in_dim`` coordinates is read as a grouping of input features and
    lifted onto the first weight layer; the lifted one is what the dataset
    records.
    """
    if not 0 <= zero_fraction < 1:
        raise DataError("zero_fraction must lie in [0, 1)")
    spec = model if model is not None else models.LogisticRegression(in_dim, classes)
    if spec.in_dim != in_dim:
        raise DataError(f"model takes {spec.in_dim} inputs, in_dim is {in_dim}")
    p = models.dim(spec)
    if partition.dim == in_dim != p:
        partition = models.feature_groups(spec, partition)
    partition.check(p)
    rng = np.random.default_rng(seed)

    values = np.zeros(p)
    weights = partition.index
    values[weights] = rng.standard_normal(weights.size)
    n_zero = math.ceil(zero_fraction * len(partition))
    zero_groups = rng.choice(len(partition), size=n_zero, replace=False)
    for g in zero_groups:
        values[partition.groups[g]] = 0.0
    truth = ParamVector(values, spec.layout)
    pattern = np.zeros(len(partition), dtype=bool)
    pattern[zero_groups] = True

    kept_x, kept_y = [], []
    drawn = kept = 0
    block = max(256, 2 * n)
    while kept < n:
        X = rng.standard_normal((block, in_dim))
        z = models.logits(spec, truth, X)
        top2 = np.sort(z, axis=1)[:, -2:]
        ok = top2[:, 1] - top2[:, 0] >= margin
        drawn += block
        kept += int(ok.sum())
        kept_x.append(X[ok])
        kept_y.append(np.argmax(z[ok], axis=1))
        if drawn >= 10_000 and kept / drawn < 1e-3:
            raise MarginTooLargeError(
                f"margin {margin} accepted only {kept} of {drawn} draws")
    X = np.concatenate(kept_x)[:n]
    y = np.concatenate(kept_y)[:n]
    if hasattr(spec, "prune_dead"):
        # hidden units silent on every sample only feed zero-gradient weights;
        # zeroing them leaves the logits alone and makes the truth consistent
        truth = truth.with_values(spec.prune_dead(truth, X))
        pattern = partition.nonzero_counts(truth.values) == 0
    return Dataset(X, y, spec.classes if hasattr(spec, "classes") else classes,
                   ground_truth=truth, truth_pattern=pattern, partition=partition)


IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def parse_idx_images(buf: bytes) -> np.ndarray:
    """Decode an IDX3 image file into an ``(count, rows, cols)`` uint8 array."""
    if len(buf) < 16:
        raise IdxFormatError("truncated image header", len(buf))
    magic, count, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}", 0)
    expected = 16 + count * rows * cols
    if len(buf) < expected:
        raise IdxFormatError(f"image data truncated, need {expected} bytes", len(buf))
    if len(buf) > expected:
        raise IdxFormatError("trailing bytes after image data", expected)
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise IdxFormatError("truncated label header", len(buf))
    magic, count = struct.unpack(">II", buf[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{magic:08x}", 0)
    expected = 8 + count
    if len(buf) < expected:
        raise IdxFormatError(f"label data truncated, need {expected} bytes", len(buf))
    if len(buf) > expected:
        raise IdxFormatError("trailing bytes after label data", expected)
    return np.frombuffer(buf, dtype=np.uint8, offset=8)


def _read(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        import gzip
        return gzip.decompress(path.read_bytes())
    return path.read_bytes()


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to ``[0, 1]``.

    Gzipped files (``.gz``) are decompressed transparently.
    """
    images = parse_idx_images(_read(image_path))
    labels = parse_idx_labels(_read(label_path))
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    X = images.reshape(images.shape[0], -1) / 255.0
    classes = max(10, int(labels.max()) + 1) if labels.size else 10
    return Dataset(X, labels, classes)


def idx_bytes(dataset: Dataset, rows: int = 28, cols: int = 28) -> tuple[bytes, bytes]:
    """Encode a dataset with ``[0, 1]``-scaled pixels back to IDX image/label bytes."""
    pixels = np.rint(dataset.inputs * 255.0)
    if pixels.min() < 0 or pixels.max() > 255 or dataset.inputs.shape[1] != rows * cols:
        raise DataError("inputs are not 8-bit images of the requested size")
    n = len(dataset)
    img = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    return img, lab


def save_mnist_idx(dataset: Dataset, image_path, label_path, rows: int = 28, cols: int = 28):
    img, lab = idx_bytes(dataset, rows, cols)
    Path(image_path).write_bytes(img)
    Path(label_path).write_bytes(lab)


@dataclass(frozen=True)
class AugmentationPolicy:
    """``kind="none"`` or ``kind="gaussian"``: add ``N(0, sigma^2)`` noise to
    every input each time it is drawn."""

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise DataError(f"unknown augmentation {self.kind!r}")
        if self.sigma < 0:
            raise DataError("sigma must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind == "gaussian" and self.sigma > 0


class Sampler:
    """Seeded minibatch stream.

    Each call to :meth:`epoch` yields one pass over a fresh uniform
    permutation; the last batch may be short. Shuffling and augmentation
    noise use independent generators spawned from ``seed``.
    """

    def __init__(self, dataset: Dataset, batch_size: int,
                 policy: AugmentationPolicy | None = None, seed: int = 0):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.dataset = dataset
        self.batch_size = batch_size
        self.policy = policy or AugmentationPolicy()
        shuffle_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
        self._shuffle = np.random.default_rng(shuffle_seq)
        self._noise = np.random.default_rng(noise_seq)

    def batches_per_epoch(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def epoch(self):
        X, y = self.dataset.inputs, self.dataset.labels
        order = self._shuffle.permutation(len(self.dataset))
        for lo in range(0, order.size, self.batch_size):
            idx = order[lo:lo + self.batch_size]
            xb = X[idx]
            if self.policy.active:
                xb = xb + self.policy.sigma * self._noise.standard_normal(xb.shape)
            yield xb, y[idx]

    def __iter__(self):
        while True:
            yield from self.epoch()


def sampler(dataset: Dataset, batch_size: int, policy: AugmentationPolicy | None = None,
            seed: int = 0) -> Sampler:
    return Sampler(dataset, batch_size, policy, seed)
