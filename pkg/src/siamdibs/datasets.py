"""Labeled datasets: a seeded class-blob generator and an IDX file loader."""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._seeding import derive_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    """Raised when a dataset cannot be built or violates its invariants."""


class IdxFormatError(DatasetError):
    """Malformed IDX file. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature vectors with 1-based class labels in ``{1..n_c}``.

    Arrays are copied and frozen on construction so instances can be shared
    between runs without defensive copies.
    """

    items: np.ndarray
    labels: np.ndarray
    n_c: int
    name: str = ""

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.float64)
        if items.ndim == 1:
            items = items[:, None]
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DatasetError("labels must be a 1-d sequence")
        if labels.size and not np.array_equal(labels, np.round(labels)):
            raise DatasetError("labels must be integers")
        labels = labels.astype(np.int64)
        if items.ndim != 2:
            raise DatasetError(f"items must be a 2-d array, got shape {items.shape}")
        if items.shape[0] != labels.shape[0]:
            raise DatasetError(
                f"items and labels differ in length ({items.shape[0]} vs {labels.shape[0]})")
        if int(self.n_c) < 1:
            raise DatasetError(f"n_c must be positive, got {self.n_c}")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_c):
            raise DatasetError(f"labels must lie in 1..{self.n_c}")
        missing = sorted(set(range(1, self.n_c + 1)) - set(np.unique(labels).tolist()))
        if missing:
            raise DatasetError(f"class ids {missing} have no items")
        object.__setattr__(self, "items", _readonly(items))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "n_c", int(self.n_c))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.items.shape[1])

    def class_counts(self) -> np.ndarray:
        """Item count per class, indexed 0..n_c-1 for classes 1..n_c."""
        return np.bincount(self.labels - 1, minlength=self.n_c)

    def class_indices(self, c: int) -> np.ndarray:
        """Dataset indices of class ``c`` (1-based) in dataset order."""
        return np.flatnonzero(self.labels == c)

    def subset(self, indices, name: str | None = None) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.items[idx], self.labels[idx], self.n_c,
                              self.name if name is None else name)

    def relabeled(self, labels, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(self.items, labels, self.n_c,
                              self.name if name is None else name)


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian class blobs."""

    n_c: int = 10
    N_c: int = 50
    d: int = 16
    separation: float = 6.0
    spread: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_c < 2:
            raise DatasetError(f"n_c must be >= 2, got {self.n_c}")
        if self.N_c < 2:
            raise DatasetError(f"N_c must be >= 2, got {self.N_c}")
        if self.d < 1:
            raise DatasetError(f"d must be >= 1, got {self.d}")
        if not self.separation > 0:
            raise DatasetError(f"separation must be > 0, got {self.separation}")
        if not self.spread >= 0:
            raise DatasetError(f"spread must be >= 0, got {self.spread}")


def class_centers(n_c: int, d: int, separation: float, seed: int = 0) -> np.ndarray:
    """Class centers at mutual distance >= ``separation``.

    With ``d >= n_c`` the centers are scaled basis vectors, exactly
    ``separation`` apart and independent of ``seed``. Otherwise random
    directions on a sphere are drawn and rejected until the separation holds,
    growing the radius after every batch of failures.
    """
    if d >= n_c:
        centers = np.zeros((n_c, d))
        centers[np.arange(n_c), np.arange(n_c)] = separation / np.sqrt(2.0)
        return centers
    if d == 1 and n_c > 2:
        raise DatasetError(
            f"cannot place {n_c} centers at separation {separation} on the 1-d sphere")
    rng = derive_rng(seed, "centers")
    radius = separation / np.sqrt(2.0)
    for _ in range(60):
        for _ in range(200):
            u = rng.standard_normal((n_c, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            c = radius * u
            gaps = [np.linalg.norm(c[i] - c[j]) for i, j in itertools.combinations(range(n_c), 2)]
            if min(gaps) >= separation:
                return c
        radius *= 1.15
    raise DatasetError(
        f"center placement failed: {n_c} centers at separation {separation} in d={d}")


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Draw ``N_c`` items per class around the class centers.

    Items come in a seeded random order, as in a real corpus; chains built in
    dataset order would otherwise pair SLN-relabeled items with each other.
    The same spec always yields the same bytes.
    """
    spec.validate()
    centers = class_centers(spec.n_c, spec.d, spec.separation, spec.seed)
    rng = derive_rng(spec.seed, "synthetic-items")
    noise = rng.standard_normal((spec.n_c * spec.N_c, spec.d))
    labels = np.repeat(np.arange(1, spec.n_c + 1), spec.N_c)
    labels = labels[derive_rng(spec.seed, "synthetic-order").permutation(labels.size)]
    items = centers[labels - 1] + spec.spread * noise
    name = (f"synthetic(n_c={spec.n_c},N_c={spec.N_c},d={spec.d},"
            f"sep={spec.separation:g},spread={spec.spread:g},seed={spec.seed})")
    return LabeledDataset(items, labels, spec.n_c, name)


def _read_header(buf: bytes, path, magic: int, n_dims: int):
    need = 4 * (1 + n_dims)
    if len(buf) < need:
        raise IdxFormatError(f"{path}: truncated header", len(buf))
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        if got & 0xFFFF00FF == magic & 0xFFFF00FF:
            raise IdxFormatError(
                f"{path}: unsupported IDX element type 0x{(got >> 8) & 0xFF:02x}", 2)
        raise IdxFormatError(f"{path}: bad magic number 0x{got:08x}, expected 0x{magic:08x}", 0)
    return struct.unpack(f">{n_dims}I", buf[4:need]), need


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label file pair (MNIST family, unsigned bytes only).

    Pixels become flat row-major vectors scaled to [0, 1]; labels ``0..k``
    become ``1..k+1``.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    ibuf = images_path.read_bytes()
    lbuf = labels_path.read_bytes()

    (n_img, rows, cols), off = _read_header(ibuf, images_path, IDX_IMAGES_MAGIC, 3)
    size = n_img * rows * cols
    if len(ibuf) < off + size:
        raise IdxFormatError(
            f"{images_path}: truncated pixel data, expected {size} bytes", len(ibuf))
    pixels = np.frombuffer(ibuf, dtype=np.uint8, count=size, offset=off)

    (n_lab,), loff = _read_header(lbuf, labels_path, IDX_LABELS_MAGIC, 1)
    if n_lab != n_img:
        raise IdxFormatError(
            f"count mismatch: {n_img} images in {images_path.name} vs "
            f"{n_lab} labels in {labels_path.name}", 4)
    if len(lbuf) < loff + n_lab:
        raise IdxFormatError(f"{labels_path}: truncated label data", len(lbuf))
    raw = np.frombuffer(lbuf, dtype=np.uint8, count=n_lab, offset=loff).astype(np.int64)

    items = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    n_c = int(raw.max()) + 1 if n_lab else 1
    return LabeledDataset(items, raw + 1, n_c, name=f"idx:{images_path.name}")


def write_idx(images: np.ndarray, labels, images_path, labels_path):
    """Write uint8 images ``(n, rows, cols)`` and 0-based labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())
