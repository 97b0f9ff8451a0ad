"""Datasets: the CIFAR-10 binary format and a synthetic stand-in."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, SeededRandom

CIFAR_SHAPE = (3, 32, 32)
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("label out of range")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split: str | None = None) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.class_count, split or self.split)


def load_cifar10(path) -> Dataset:
    """Read a CIFAR-10 binary batch: 3073-byte records, label byte first."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of {CIFAR_RECORD}")
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise ValueError(f"{path}: label byte {labels.max()} > 9")
    images = rec[:, 1:].reshape((-1,) + CIFAR_SHAPE).astype(DTYPE) / 255.0
    return Dataset(images, labels, 10, split=os.path.basename(str(path)))


def write_cifar10(data: Dataset, path):
    """Inverse of :func:`load_cifar10`; pixels are rounded to the nearest byte."""
    if data.images.shape[1:] != CIFAR_SHAPE:
        raise ValueError(f"CIFAR records hold {CIFAR_SHAPE} images")
    if len(data) and data.labels.max() > 9:
        raise ValueError("CIFAR-10 labels must be < 10")
    pix = np.rint(data.images.reshape(len(data), -1) * 255.0).astype(np.uint8)
    rec = np.concatenate([data.labels.astype(np.uint8)[:, None], pix], axis=1)
    rec.tofile(path)


def synth_dataset(seed: int, n: int, classes: int = 10, image_shape=(3, 16, 16), noise: float = 0.15, contrast: float = 0.12, split: str = "train") -> Dataset:
    """Class-conditional blobs: a smooth per-class mean image plus pixel noise.

    Class means depend only on ``seed`` and the shape, so train and test sets
    drawn with the same seed share classes; the noise stream is forked by
    ``split``.
    """
    if n < classes:
        raise ValueError("need at least one example per class")
    c, h, w = image_shape
    base = SeededRandom(seed)
    coarse = base.fork(0).uniform(-1.0, 1.0, (classes, c, 4, 4))
    # nearest upsample then a 2x2 box blur keeps the patterns low-frequency
    means = np.repeat(np.repeat(coarse, -(-h // 4), axis=2), -(-w // 4), axis=3)[:, :, :h, :w]
    means = 0.5 * (means + np.roll(means, 1, axis=2))
    means = 0.5 * (means + np.roll(means, 1, axis=3))
    means = 0.5 + contrast * means
    rng = base.fork(1, sum(split.encode()))
    labels = np.concatenate([np.arange(classes), rng.integers(0, classes, n - classes)])
    labels = labels[rng.permutation(n)]
    images = means[labels] + rng.normal((n, c, h, w), scale=noise)
    return Dataset(np.clip(images, 0.0, 1.0), labels, classes, split)
