"""IDX dataset loading, gzip transparent.

Images arrive as (N, H, W) or (N, H, W, C) unsigned bytes, labels as (N,).
Each dataset name maps to a fixed pair of file stems; SVHN and CIFAR-10 are
expected pre-converted to IDX, nothing here reads their upstream formats.
"""

from __future__ import annotations

import gzip
import math
import struct
from pathlib import Path

import numpy as np

from .errors import DatasetMissing, FormatError

DATASET_FILES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "svhn": ("svhn-train-images-idx4-ubyte", "svhn-train-labels-idx1-ubyte"),
    "cifar10": ("cifar10-train-images-idx4-ubyte", "cifar10-train-labels-idx1-ubyte"),
}


def load_idx(path, want_dims) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 4 or data[0] or data[1] or data[2] != 0x08:
        raise FormatError("%s: not an unsigned-byte IDX stream" % path)
    ndims = data[3]
    if ndims not in want_dims:
        raise FormatError(
            "%s: %d-dimensional, expected one of %s" % (path, ndims, sorted(want_dims))
        )
    dims = struct.unpack(">%dI" % ndims, data[4 : 4 + 4 * ndims])
    payload = data[4 + 4 * ndims :]
    if len(payload) != math.prod(dims):
        raise FormatError(
            "%s: payload is %d bytes, dimensions say %d"
            % (path, len(payload), math.prod(dims))
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def find_file(data_dir, stem: str) -> Path:
    for name in (stem + ".gz", stem):
        p = Path(data_dir) / name
        if p.exists():
            return p
    raise DatasetMissing("no %s(.gz) under %s" % (stem, data_dir))


def load_training_pair(dataset: str, data_dir):
    """Returns (images (N,H,W,C) uint8, labels (N,) int64) for a dataset name."""
    if dataset not in DATASET_FILES:
        raise DatasetMissing("no file layout known for dataset %r" % (dataset,))
    img_stem, lab_stem = DATASET_FILES[dataset]
    images = load_idx(find_file(data_dir, img_stem), want_dims=(3, 4))
    labels = load_idx(find_file(data_dir, lab_stem), want_dims=(1,)).astype(np.int64)
    if images.ndim == 3:
        images = images[..., None]
    if len(images) != len(labels):
        raise FormatError(
            "%d images but %d labels in %s" % (len(images), len(labels), data_dir)
        )
    return images, labels
