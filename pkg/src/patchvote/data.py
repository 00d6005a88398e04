"""Dataset loading (IDX, CIFAR-10 binary), normalization, splits, augmentation."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR10_RECORD = 3073  # 1 label byte + 32*32*3 pixel bytes


class IdxFormatError(ValueError):
    """Malformed IDX or CIFAR-10 binary file."""


@dataclass
class Dataset:
    """Images as float32 [N, H, W, C] with pixels in [0, 1] and integer labels."""

    images: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N, H, W, C], got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"count mismatch: {len(self.images)} images vs {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError(f"labels out of range [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    @property
    def channels(self) -> int:
        return self.images.shape[3]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices], self.classes)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def load_idx(images_path, labels_path, classes: int | None = None) -> Dataset:
    """Load an IDX image/label file pair, scaling pixels to [0, 1].

    Accepts plain or .gz files.  Headers are big-endian; image payloads are
    unsigned bytes.
    """
    ibuf = _read_bytes(images_path)
    if len(ibuf) < 16:
        raise IdxFormatError(f"truncated image file {images_path}: header incomplete")
    magic, count, rows, cols = struct.unpack(">IIII", ibuf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"bad magic 0x{magic:08x} in {images_path} (expected 0x{IDX_IMAGE_MAGIC:08x})"
        )
    if len(ibuf) - 16 != count * rows * cols:
        raise IdxFormatError(
            f"truncated image file {images_path}: "
            f"expected {count * rows * cols} pixel bytes, found {len(ibuf) - 16}"
        )

    lbuf = _read_bytes(labels_path)
    if len(lbuf) < 8:
        raise IdxFormatError(f"truncated label file {labels_path}: header incomplete")
    lmagic, lcount = struct.unpack(">II", lbuf[:8])
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"bad magic 0x{lmagic:08x} in {labels_path} (expected 0x{IDX_LABEL_MAGIC:08x})"
        )
    if len(lbuf) - 8 != lcount:
        raise IdxFormatError(
            f"truncated label file {labels_path}: expected {lcount} bytes, found {len(lbuf) - 8}"
        )
    if count != lcount:
        raise IdxFormatError(f"count mismatch: {count} images vs {lcount} labels")

    images = np.frombuffer(ibuf, dtype=np.uint8, offset=16)
    images = images.reshape(count, rows, cols, 1).astype(np.float32) / 255.0
    labels = np.frombuffer(lbuf, dtype=np.uint8, offset=8).astype(np.int64)
    if classes is None:
        classes = int(labels.max()) + 1 if count else 0
    return Dataset(images, labels, classes)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Write a dataset back to an IDX image/label pair (inverse of load_idx)."""
    if dataset.channels != 1:
        raise ValueError("IDX image files hold single-channel images")
    n, h, w = len(dataset), dataset.height, dataset.width
    pixels = np.round(dataset.images[..., 0] * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def load_cifar10(batch_paths, classes: int = 10) -> Dataset:
    """Load CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record)."""
    images, labels = [], []
    for path in batch_paths:
        buf = _read_bytes(path)
        if len(buf) == 0 or len(buf) % CIFAR10_RECORD != 0:
            raise IdxFormatError(
                f"truncated CIFAR-10 batch {path}: {len(buf)} bytes is not a "
                f"multiple of {CIFAR10_RECORD}"
            )
        records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
        labels.append(records[:, 0].astype(np.int64))
        # pixel planes are R, G, B, each 32x32 row-major
        planes = records[:, 1:].reshape(-1, 3, 32, 32)
        images.append(planes.transpose(0, 2, 3, 1).astype(np.float32) / 255.0)
    return Dataset(np.concatenate(images), np.concatenate(labels), classes)


def random_split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint seeded train/validation partition; train gets ceil(f * n) samples."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    n_train = int(np.ceil(spec.train_fraction * n))
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])
    return dataset.subset(train_idx), dataset.subset(val_idx)


def shift_image(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer-shift an [H, W, C] image with zero padding."""
    h, w = image.shape[:2]
    out = np.zeros_like(image)
    y0, y1 = max(dy, 0), h + min(dy, 0)
    x0, x1 = max(dx, 0), w + min(dx, 0)
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = image[y0 - dy:y1 - dy, x0 - dx:x1 - dx]
    return out


def augment_batch(
    images: np.ndarray,
    rng: np.random.Generator,
    max_shift: int = 2,
    flip: bool = False,
) -> np.ndarray:
    """Random +-max_shift pixel shifts (zero padding), optional horizontal flips."""
    out = np.empty_like(images)
    shifts = rng.integers(-max_shift, max_shift + 1, size=(len(images), 2))
    flips = rng.random(len(images)) < 0.5 if flip else np.zeros(len(images), dtype=bool)
    for i, img in enumerate(images):
        shifted = shift_image(img, int(shifts[i, 0]), int(shifts[i, 1]))
        out[i] = shifted[:, ::-1] if flips[i] else shifted
    return out
