"""
Digit datasets for the layout training experiment.
Reads the MNIST IDX container and generates a small synthetic stand-in for
smoke runs when the MNIST files are not available.
"""

import gzip
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..utils.errors import DatasetError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10


@dataclass(frozen=True)
class Dataset:
    """Grayscale images (N, H, W) in [0, 1] with labels (N,) in [0, 10)."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 3:
            raise DatasetError(f"images must be (N, H, W), got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise DatasetError(f"{labels.shape[0] if labels.ndim else 0} labels for {images.shape[0]} images")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise DatasetError("image values must lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            raise DatasetError(f"labels must lie in [0, {NUM_CLASSES})")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.images.shape[0]

    def subset(self, limit):
        """The first `limit` examples (all if limit is None)."""
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit], self.split)

    def batches(self, batch_size, rng=None):
        """Yield index arrays of at most batch_size, shuffled if rng is given."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            yield order[start:start + batch_size]


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic):
    """Read an unsigned-byte IDX array.

    Raises:
        OSError: if the file cannot be opened
        DatasetError: on a wrong magic number or a truncated payload
    """
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise DatasetError(f"{path}: truncated IDX header")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise DatasetError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")

    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetError(f"{path}: truncated IDX header")
    dims = tuple(int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4))
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise DatasetError(f"{path}: truncated IDX payload ({len(raw) - header} of {expected} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def write_idx(path, array, magic):
    """Write an unsigned-byte IDX array (used for fixtures and exports)."""
    array = np.asarray(array, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dims = np.asarray(array.shape, dtype=">u4").tobytes()
    with open(path, "wb") as f:
        f.write(int(magic).to_bytes(4, "big") + dims + array.tobytes())
    return path


def load_mnist(images_path, labels_path, split="train"):
    """Load an MNIST split from IDX files (optionally gzipped).

    Returns:
        Dataset with images scaled to [0, 1]
    """
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.ndim != 3 or labels.ndim != 1:
        raise DatasetError(f"unexpected IDX dimensions {images.shape} / {labels.shape}")
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= NUM_CLASSES:
        raise DatasetError(f"label {int(labels.max())} out of range in {labels_path}")

    dataset = Dataset(images / 255.0, labels, split)
    logger.info(f"Loaded {len(dataset)} {split} images of {images.shape[1]}x{images.shape[2]}")
    return dataset


def synthetic_digits(n, seed=0, size=28, split="train"):
    """Procedural 10-class digit stand-in.

    Class c is a bright blob placed on a ring at angle 2 pi c / 10, plus a
    bar whose orientation depends on c, with per-example jitter and noise.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, NUM_CLASSES, size=n)
    coords = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    y, x = np.meshgrid(coords, coords, indexing="ij")

    images = np.empty((n, size, size))
    for i, label in enumerate(labels):
        angle = 2.0 * np.pi * label / NUM_CLASSES
        cx, cy = 0.55 * np.array([np.cos(angle), np.sin(angle)]) + rng.normal(0.0, 0.05, size=2)
        blob = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * 0.18 ** 2))

        tilt = np.pi * (label % 5) / 5.0
        distance = np.abs(np.cos(tilt) * y - np.sin(tilt) * x)
        bar = np.exp(-distance ** 2 / (2.0 * 0.08 ** 2)) * (np.hypot(x, y) < 0.45)

        image = blob + 0.6 * bar + rng.normal(0.0, 0.03, size=(size, size))
        images[i] = np.clip(image, 0.0, 1.0)

    return Dataset(images, labels, split)
