"""Dataset plumbing: IDX files, CSV feature files and generated clusters."""

from __future__ import annotations

import csv
import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, CountMismatch, ShapeMismatch, TruncatedFile

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> tuple[tuple[int, ...], np.ndarray]:
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: file shorter than the magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFile(f"{path}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise TruncatedFile(f"{path}: payload needs {count} bytes, file has {len(raw) - header}")
    return dims, np.frombuffer(raw, dtype=np.uint8, count=count, offset=header)


def load_idx(path_images, path_labels) -> tuple[np.ndarray, np.ndarray]:
    """Read an IDX image/label pair.

    Returns features of shape ``(count, rows * cols)`` scaled to ``[0, 1]``
    and integer labels of shape ``(count,)``.  Files ending in ``.gz`` are
    decompressed on the fly.
    """
    dims, pixels = _parse_idx(_read_bytes(path_images), IMAGES_MAGIC, 3, path_images)
    (n_labels,), labels = _parse_idx(_read_bytes(path_labels), LABELS_MAGIC, 1, path_labels)
    count, rows, cols = dims
    if count != n_labels:
        raise CountMismatch(f"{count} images but {n_labels} labels")
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return features, labels.astype(np.int64)


def write_idx(path_images, path_labels, images, labels) -> None:
    """Write ``uint8`` images ``(count, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise ShapeMismatch("images must have shape (count, rows, cols)")
    with open(path_images, "wb") as fh:
        fh.write(struct.pack(">4I", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(path_labels, "wb") as fh:
        fh.write(struct.pack(">2I", LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


def load_csv_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Header row, comma-separated doubles, integer label in the last column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ShapeMismatch(f"{path}: empty file")
        rows = [row for row in reader if row]
    width = len(header)
    for lineno, row in enumerate(rows, start=2):
        if len(row) != width:
            raise ShapeMismatch(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
    if not rows:
        return np.zeros((0, width - 1)), np.zeros(0, dtype=np.int64)
    table = np.array(rows, dtype=object)
    features = table[:, :-1].astype(np.float64)
    labels = table[:, -1].astype(np.int64)
    return features, labels


def gen_classification_data(n: int, dim: int, classes: int, seed: int,
                            separation: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian clusters with unit covariance.

    Class means sit ``separation`` apart: orthonormal directions scaled by
    ``separation / sqrt(2)`` when ``dim >= classes``, random unit directions
    with the same scaling otherwise.
    """
    if min(n, dim, classes) < 1:
        raise ValueError("n, dim and classes must all be at least 1")
    rng = np.random.default_rng(seed)
    if classes == 1:
        means = np.zeros((1, dim))
    elif dim >= classes:
        Q, _ = np.linalg.qr(rng.standard_normal((dim, classes)))
        means = Q.T * (separation / np.sqrt(2.0))
    else:
        dirs = rng.standard_normal((classes, dim))
        means = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * (separation / np.sqrt(2.0))
    labels = rng.integers(0, classes, size=n)
    features = means[labels] + rng.standard_normal((n, dim))
    return features, labels


def corrupt_labels(labels, p: float, classes: int, seed: int) -> np.ndarray:
    """Replace each label with probability ``p`` by a uniformly drawn wrong class."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("corruption rate must lie in [0, 1]")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    flip = rng.random(labels.size) < p
    if classes < 2:
        return labels.copy()
    shift = rng.integers(1, classes, size=labels.size)
    return np.where(flip, (labels + shift) % classes, labels)
