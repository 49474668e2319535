import gzip
import shutil
import struct
from pathlib import Path

import numpy as np
import pytest

from pisa_trainer import mnist_recipe, train
from pisa_trainer.datasets import load_idx

REPO = Path(__file__).resolve().parents[2]
MNIST_DIR = REPO / "data" / "mnist"
PISA_SIM = shutil.which("pisa-sim")


def _write_idx(path, array):
    # gzipped IDX: big-endian dims, unsigned-byte payload
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    head = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim)
    head += struct.pack(">%dI" % arr.ndim, *arr.shape)
    with gzip.open(path, "wb") as fh:
        fh.write(head + arr.tobytes())
    return path


@pytest.fixture
def idx_writer():
    """Writes (path, array) as a gzipped IDX file; returns the path."""
    return _write_idx


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.skip("MNIST IDX files not present under data/mnist")
    return MNIST_DIR


@pytest.fixture(scope="session")
def sim_cli():
    if PISA_SIM is None:
        pytest.skip("pisa-sim CLI not installed")
    return PISA_SIM


@pytest.fixture(scope="session")
def mnist_test_set():
    if not (MNIST_DIR / "t10k-images-idx3-ubyte.gz").exists():
        pytest.skip("MNIST test files not present")
    images = load_idx(MNIST_DIR / "t10k-images-idx3-ubyte.gz", want_dims=(3,))
    labels = load_idx(MNIST_DIR / "t10k-labels-idx1-ubyte.gz", want_dims=(1,))
    return images, labels.astype(np.int64)


@pytest.fixture(scope="session")
def quick_ckpt():
    """A cheap but real MNIST checkpoint shared across the suite."""
    if not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.skip("MNIST IDX files not present under data/mnist")
    recipe = mnist_recipe(MNIST_DIR, epochs=2, train_limit=6000, val_frames=1000)
    return train(recipe, log=lambda line: None)
