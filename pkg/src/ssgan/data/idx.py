"""IDX (big-endian) image/label file parsing, as published for MNIST."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountError(IdxError):
    pass


def _read_exact(f, nbytes: int, path, what: str) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise IdxTruncatedError(f"{path}: truncated while reading {what} "
                                f"(wanted {nbytes} bytes, got {len(buf)})")
    return buf


def load_idx(images_path, labels_path=None):
    """Load an IDX image file (and optional label file).

    Returns (images, labels): images is float32 [N,1,H,W] scaled to [-1, 1]
    (byte 0 -> -1.0, byte 255 -> +1.0); labels is int64 [N] or None.
    """
    images_path = Path(images_path)
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path, "header"))
        if magic != IMAGES_MAGIC:
            raise IdxMagicError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
        raw = _read_exact(f, count * rows * cols, images_path, f"{count} images")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, 1, rows, cols)
    images = pixels.astype(np.float32) / np.float32(127.5) - np.float32(1.0)

    labels = None
    if labels_path is not None:
        labels_path = Path(labels_path)
        with open(labels_path, "rb") as f:
            magic, lcount = struct.unpack(">II", _read_exact(f, 8, labels_path, "header"))
            if magic != LABELS_MAGIC:
                raise IdxMagicError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")
            raw = _read_exact(f, lcount, labels_path, f"{lcount} labels")
        if lcount != count:
            raise IdxCountError(f"label count {lcount} != image count {count} "
                                f"({labels_path} vs {images_path})")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return images, labels


def write_idx_images(path, pixels: np.ndarray) -> None:
    """Write uint8 images [N,H,W] (or [N,1,H,W]) in IDX format."""
    if pixels.ndim == 4:
        pixels = pixels[:, 0]
    n, h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, h, w))
        f.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
