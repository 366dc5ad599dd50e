import struct

import numpy as np
import pytest

from augnet.data import LabeledDataset


def make_dataset(n_per_class=8, h=8, w=8, c=1, seed=0, id_prefix="im"):
    """Random two-class dataset with per-class mean offsets."""
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    images = rng.uniform(0.0, 1.0, size=(n, h, w, c))
    labels = np.repeat([0, 1], n_per_class)
    images[labels == 1] = np.clip(images[labels == 1] + 0.15, 0.0, 1.0)
    return LabeledDataset(
        images=images,
        labels=labels.astype(np.int64),
        ids=[f"{id_prefix}_{i:04d}" for i in range(n)],
        class_names=("a", "b"),
    )


def write_idx_pair(dirpath, images, labels, image_magic=0x803, label_magic=0x801,
                   stem="t"):
    """Write (N, H, W) uint8 images and uint8 labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    ip = dirpath / f"{stem}-images-idx3-ubyte"
    lp = dirpath / f"{stem}-labels-idx1-ubyte"
    with open(ip, "wb") as f:
        f.write(struct.pack(">IIII", image_magic, images.shape[0], images.shape[1],
                            images.shape[2]))
        f.write(images.tobytes())
    with open(lp, "wb") as f:
        f.write(struct.pack(">II", label_magic, labels.shape[0]))
        f.write(labels.tobytes())
    return str(ip), str(lp)


@pytest.fixture
def tiny_dataset():
    return make_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
