"""Dataset loading (IDX digit files, image directories), normalization, and
the stratified train/validation split."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from .container import DATASET_MAGIC, read_container, write_container

__all__ = [
    "DataError",
    "IdxParseError",
    "LabeledDataset",
    "SplitDataset",
    "read_image",
    "write_image",
    "load_idx",
    "load_image_dir",
    "compute_norm_stats",
    "apply_norm_stats",
    "denormalize",
    "normalize",
    "split",
    "save_dataset_cache",
    "load_dataset_cache",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    """Raised for unusable dataset inputs."""


class IdxParseError(DataError):
    """Raised for malformed IDX files; messages carry the failing byte offset."""


@dataclass
class LabeledDataset:
    """Two-class image collection: images (N, H, W, C) in [0, 1] before
    normalization, integer labels in {0, 1}, one string id per image, and the
    per-channel normalization stats once applied."""

    images: np.ndarray
    labels: np.ndarray
    ids: list[str]
    class_names: tuple[str, str]
    norm_stats: tuple[np.ndarray, np.ndarray] | None = None  # (offset, scale)

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels) or len(self.images) != len(self.ids):
            raise DataError("images, labels, and ids must have equal lengths")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(
            images=self.images[indices].copy(),
            labels=self.labels[indices].copy(),
            ids=[self.ids[i] for i in indices],
            class_names=self.class_names,
            norm_stats=self.norm_stats,
        )


@dataclass
class SplitDataset:
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset | None = None


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Decode an image file to (H, W, C) float64 in [0, 1], C in {1, 3}."""
    import matplotlib.image as mpimg

    arr = mpimg.imread(path)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    elif arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr


def write_image(path, img: np.ndarray) -> None:
    """Encode an (H, W, C) array in [0, 1] as a PNG (grayscale for C=1)."""
    import matplotlib.image as mpimg

    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 3:
        raise ValueError(f"write_image expects (H, W, C), got {img.shape}")
    if img.shape[2] == 1:
        # replicate to RGB: colormap lookup would distort the quantization
        img = np.repeat(img, 3, axis=2)
    mpimg.imsave(path, img, vmin=0.0, vmax=1.0)


def bilinear_resize(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    h, w, c = img.shape
    oh, ow = out_hw
    ys = np.linspace(0, h - 1, oh)
    xs = np.linspace(0, w - 1, ow)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    return ((1 - fy) * (1 - fx) * img[np.ix_(y0, x0)]
            + (1 - fy) * fx * img[np.ix_(y0, x1)]
            + fy * (1 - fx) * img[np.ix_(y1, x0)]
            + fy * fx * img[np.ix_(y1, x1)])


# ---------------------------------------------------------------------------
# IDX digit files
# ---------------------------------------------------------------------------

def _read_u32(f, path, what) -> int:
    offset = f.tell()
    raw = f.read(4)
    if len(raw) < 4:
        raise IdxParseError(f"{path}: truncated {what} at byte {offset}")
    return struct.unpack(">I", raw)[0]


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_u32(f, path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxParseError(f"{path}: bad image magic 0x{magic:08x} at byte 0 "
                                f"(expected 0x{IDX_IMAGE_MAGIC:08x})")
        count = _read_u32(f, path, "count")
        rows = _read_u32(f, path, "rows")
        cols = _read_u32(f, path, "cols")
        offset = f.tell()
        payload = f.read(count * rows * cols)
        if len(payload) < count * rows * cols:
            raise IdxParseError(f"{path}: truncated pixel data at byte {offset + len(payload)} "
                                f"(expected {count * rows * cols} bytes)")
        return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_u32(f, path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise IdxParseError(f"{path}: bad label magic 0x{magic:08x} at byte 0 "
                                f"(expected 0x{IDX_LABEL_MAGIC:08x})")
        count = _read_u32(f, path, "count")
        offset = f.tell()
        payload = f.read(count)
        if len(payload) < count:
            raise IdxParseError(f"{path}: truncated label data at byte {offset + len(payload)}")
        return np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, keep_classes: tuple[int, int],
             per_class_cap: int) -> LabeledDataset:
    """Load a two-class subset of an IDX image/label pair.

    Keeps the first `per_class_cap` images of each class in file order,
    scales pixels to [0, 1], and remaps labels to {0, 1} by ascending
    original class id.
    """
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxParseError(f"image count {len(images)} does not match label count {len(labels)} "
                            f"({images_path} vs {labels_path})")
    lo, hi = sorted(int(c) for c in keep_classes)
    if lo == hi:
        raise DataError("keep_classes must name two distinct classes")

    picked: list[int] = []
    out_labels: list[int] = []
    for new_label, cls in enumerate((lo, hi)):
        members = np.flatnonzero(labels == cls)
        if members.size < per_class_cap:
            raise DataError(f"class {cls} has only {members.size} images, "
                            f"cannot keep {per_class_cap}")
        members = members[:per_class_cap]
        picked.extend(int(i) for i in members)
        out_labels.extend([new_label] * len(members))

    imgs = images[picked].astype(np.float64)[..., None] / 255.0
    return LabeledDataset(
        images=imgs,
        labels=np.asarray(out_labels, dtype=np.int64),
        ids=[f"idx_{i:05d}" for i in picked],
        class_names=(str(lo), str(hi)),
    )


# ---------------------------------------------------------------------------
# image directories
# ---------------------------------------------------------------------------

def load_image_dir(root, class_a: str, class_b: str, per_class_cap: int,
                   resize_to: tuple[int, int] | None = None) -> LabeledDataset:
    """Load `<root>/<class>/<file>` images; class_a maps to label 0.

    Files are taken in lexicographic name order. All images must share
    dimensions unless `resize_to` is given.
    """
    all_images: list[np.ndarray] = []
    all_labels: list[int] = []
    ids: list[str] = []
    for label, class_name in enumerate((class_a, class_b)):
        class_dir = os.path.join(root, class_name)
        if not os.path.isdir(class_dir):
            raise DataError(f"class directory not found: {class_dir}")
        names = sorted(n for n in os.listdir(class_dir)
                       if os.path.isfile(os.path.join(class_dir, n)))
        if not names:
            raise DataError(f"class directory is empty: {class_dir}")
        if len(names) < per_class_cap:
            raise DataError(f"class {class_name!r} has only {len(names)} files, "
                            f"cannot keep {per_class_cap}")
        for name in names[:per_class_cap]:
            path = os.path.join(class_dir, name)
            try:
                img = read_image(path)
            except (OSError, SyntaxError) as e:
                raise DataError(f"cannot decode image {path}: {e}") from e
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            if resize_to is not None and img.shape[:2] != tuple(resize_to):
                img = bilinear_resize(img, tuple(resize_to))
            all_images.append(img)
            all_labels.append(label)
            ids.append(os.path.splitext(name)[0])

    shapes = {im.shape for im in all_images}
    if len(shapes) > 1:
        raise DataError(f"images have mixed dimensions {sorted(shapes)}; pass an explicit "
                        "resize_to to unify them")
    return LabeledDataset(
        images=np.stack(all_images),
        labels=np.asarray(all_labels, dtype=np.int64),
        ids=ids,
        class_names=(class_a, class_b),
    )


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def compute_norm_stats(ds: LabeledDataset, kind: str = "standardize"):
    """Per-channel (offset, scale) so that x' = (x - offset) / scale.

    standardize: mean/std. minmax: min/(max - min). A degenerate (constant)
    channel is an error.
    """
    axes = (0, 1, 2)
    if kind == "standardize":
        offset = ds.images.mean(axis=axes)
        scale = ds.images.std(axis=axes)
    elif kind == "minmax":
        offset = ds.images.min(axis=axes)
        scale = ds.images.max(axis=axes) - offset
    else:
        raise ValueError(f"unknown normalization kind {kind!r}")
    if np.any(scale == 0.0):
        bad = np.flatnonzero(scale == 0.0)
        raise DataError(f"degenerate constant channel(s) {bad.tolist()}: zero normalization scale")
    return offset, scale


def apply_norm_stats(ds: LabeledDataset, stats) -> LabeledDataset:
    if ds.norm_stats is not None:
        raise DataError("dataset is already normalized")
    offset, scale = stats
    return replace(ds, images=(ds.images - offset) / scale, norm_stats=(offset, scale))


def denormalize(img: np.ndarray, stats) -> np.ndarray:
    offset, scale = stats
    return img * scale + offset


def normalize(splits: SplitDataset, kind: str = "standardize") -> SplitDataset:
    """Standardize every split with statistics from the training split only."""
    stats = compute_norm_stats(splits.train, kind)
    return SplitDataset(
        train=apply_norm_stats(splits.train, stats),
        val=apply_norm_stats(splits.val, stats),
        test=apply_norm_stats(splits.test, stats) if splits.test is not None else None,
    )


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split(ds: LabeledDataset, train_fraction: float = 0.8, test_fraction: float = 0.0,
          seed: int = 0) -> SplitDataset:
    """Stratified split: per class, shuffle by seed, carve off the test
    fraction, then divide the remainder train:val (default 80:20)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5917]))
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in (0, 1):
        members = np.flatnonzero(ds.labels == cls)
        if members.size < 5:
            raise DataError(f"class {cls} has only {members.size} images; need at least 5 to split")
        members = members[rng.permutation(members.size)]
        n_test = int(round(test_fraction * members.size))
        rest = members[n_test:]
        n_train = int(round(train_fraction * rest.size))
        test_idx.append(members[:n_test])
        train_idx.append(rest[:n_train])
        val_idx.append(rest[n_train:])

    test_all = np.concatenate(test_idx)
    return SplitDataset(
        train=ds.subset(np.concatenate(train_idx)),
        val=ds.subset(np.concatenate(val_idx)),
        test=ds.subset(test_all) if test_all.size else None,
    )


# ---------------------------------------------------------------------------
# dataset cache
# ---------------------------------------------------------------------------

def save_dataset_cache(path, ds: LabeledDataset) -> None:
    """Persist a dataset in the binary container format (magic "AUGD").

    String ids and class names ride in entry names (the container holds only
    named numeric tensors).
    """
    entries: dict[str, np.ndarray] = {
        "images": ds.images,
        "labels": ds.labels.astype(np.float64),
    }
    if ds.norm_stats is not None:
        entries["norm.offset"] = ds.norm_stats[0]
        entries["norm.scale"] = ds.norm_stats[1]
    for k, name in enumerate(ds.class_names):
        entries[f"class.{k}.{name}"] = np.zeros(1)
    for i, image_id in enumerate(ds.ids):
        entries[f"id.{i:06d}.{image_id}"] = np.zeros(1)
    write_container(path, entries, DATASET_MAGIC)


def load_dataset_cache(path) -> LabeledDataset:
    entries = read_container(path, DATASET_MAGIC)
    ids = {}
    class_names = {}
    for name in entries:
        if name.startswith("id."):
            _, index, image_id = name.split(".", 2)
            ids[int(index)] = image_id
        elif name.startswith("class."):
            _, index, class_name = name.split(".", 2)
            class_names[int(index)] = class_name
    stats = None
    if "norm.offset" in entries:
        stats = (entries["norm.offset"], entries["norm.scale"])
    return LabeledDataset(
        images=entries["images"],
        labels=entries["labels"].astype(np.int64),
        ids=[ids[i] for i in sorted(ids)],
        class_names=(class_names[0], class_names[1]),
        norm_stats=stats,
    )
