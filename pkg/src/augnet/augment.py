"""Dataset augmentation: random affine duplicates, ingestion of a
pre-generated style bank, and the same-class pair sampler that feeds the
augmentation network."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import DataError, LabeledDataset, read_image

__all__ = [
    "AffineSpec",
    "AffineRanges",
    "PairSample",
    "affine_apply",
    "sample_affine_spec",
    "augment_dataset_traditional",
    "load_style_bank",
    "sample_pair",
    "sample_pair_batch",
    "concat_pair",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class AffineSpec:
    """One sampled transform: shift (dx, dy) in pixels, zoom factor, rotation
    in degrees, horizontal flip, per-axis shear, and an optional per-channel
    additive hue shift (RGB only)."""

    shift: tuple[float, float] = (0.0, 0.0)
    zoom: float = 1.0
    rotate: float = 0.0
    flip_h: bool = False
    shear: tuple[float, float] = (0.0, 0.0)
    hue_shift: tuple[float, ...] | None = None

    @classmethod
    def identity(cls) -> "AffineSpec":
        return cls()


@dataclass(frozen=True)
class AffineRanges:
    """Sampling ranges; label-preserving defaults."""

    max_rotate: float = 20.0
    zoom_lo: float = 0.8
    zoom_hi: float = 1.2
    max_shift_frac: float = 0.10
    max_shear: float = 0.1
    max_hue: float = 0.2
    flip_prob: float = 0.5


def sample_affine_spec(rng: np.random.Generator, image_hw: tuple[int, int], channels: int,
                       ranges: AffineRanges = AffineRanges()) -> AffineSpec:
    """Draw each component uniformly from its range; hue only for RGB."""
    h, w = image_hw
    dx = rng.uniform(-ranges.max_shift_frac, ranges.max_shift_frac) * w
    dy = rng.uniform(-ranges.max_shift_frac, ranges.max_shift_frac) * h
    zoom = rng.uniform(ranges.zoom_lo, ranges.zoom_hi)
    rotate = rng.uniform(-ranges.max_rotate, ranges.max_rotate)
    flip_h = bool(rng.random() < ranges.flip_prob)
    shear = (rng.uniform(-ranges.max_shear, ranges.max_shear),
             rng.uniform(-ranges.max_shear, ranges.max_shear))
    hue = None
    if channels == 3:
        hue = tuple(rng.uniform(-ranges.max_hue, ranges.max_hue) for _ in range(3))
    return AffineSpec(shift=(dx, dy), zoom=zoom, rotate=rotate, flip_h=flip_h,
                      shear=shear, hue_shift=hue)


def _linear_part(spec: AffineSpec) -> np.ndarray:
    """2x2 matrix in (y, x) coordinates: rotate o zoom o shear o flip."""
    theta = np.deg2rad(spec.rotate)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    zoom = np.array([[spec.zoom, 0.0], [0.0, spec.zoom]])
    sy, sx = spec.shear
    shear = np.array([[1.0, sy], [sx, 1.0]])
    flip = np.array([[1.0, 0.0], [0.0, -1.0 if spec.flip_h else 1.0]])
    return rot @ zoom @ shear @ flip


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0.0:
        raise ValueError("affine transform is singular")
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def affine_apply(img: np.ndarray, spec: AffineSpec) -> np.ndarray:
    """Warp an (H, W, C) image by the spec: inverse mapping with bilinear
    sampling, edge replication outside the frame, then the hue shift with a
    clamp to [0, 1]. An identity spec reproduces the input exactly."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"affine_apply expects (H, W, C), got {img.shape}")
    h, w, c = img.shape
    ctr = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    t = np.array([spec.shift[1], spec.shift[0]])  # (dy, dx)
    m_inv = _inv2(_linear_part(spec))

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    rel = np.stack([ys - ctr[0] - t[0], xs - ctr[1] - t[1]])
    src_y = m_inv[0, 0] * rel[0] + m_inv[0, 1] * rel[1] + ctr[0]
    src_x = m_inv[1, 0] * rel[0] + m_inv[1, 1] * rel[1] + ctr[1]

    src_y = np.clip(src_y, 0.0, h - 1.0)
    src_x = np.clip(src_x, 0.0, w - 1.0)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (src_y - y0)[..., None]
    fx = (src_x - x0)[..., None]

    out = ((1 - fy) * (1 - fx) * img[y0, x0]
           + (1 - fy) * fx * img[y0, x1]
           + fy * (1 - fx) * img[y1, x0]
           + fy * fx * img[y1, x1])

    if spec.hue_shift is not None:
        if c != 3:
            raise ValueError("hue_shift applies to 3-channel images only")
        out = np.clip(out + np.asarray(spec.hue_shift), 0.0, 1.0)
    return out


def augment_dataset_traditional(ds: LabeledDataset, rng: np.random.Generator,
                                ranges: AffineRanges = AffineRanges()) -> LabeledDataset:
    """Append one randomly transformed duplicate per image: |out| = 2|in|."""
    if len(ds) == 0:
        raise DataError("cannot augment an empty dataset")
    h, w, c = ds.image_shape
    dups = np.empty_like(ds.images)
    for i in range(len(ds)):
        spec = sample_affine_spec(rng, (h, w), c, ranges)
        dups[i] = affine_apply(ds.images[i], spec)
    return LabeledDataset(
        images=np.concatenate([ds.images, dups], axis=0),
        labels=np.concatenate([ds.labels, ds.labels]),
        ids=list(ds.ids) + [f"{i}#aug" for i in ds.ids],
        class_names=ds.class_names,
        norm_stats=None,
    )


def _read_manifest(style_dir) -> dict[str, list[tuple[str, str]]]:
    path = os.path.join(style_dir, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise DataError(f"style bank manifest not found: {path}")
    mapping: dict[str, list[tuple[str, str]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected <id>\\t<style>\\t<path>")
            image_id, style, rel = parts
            mapping.setdefault(image_id, []).append((style, rel))
    return mapping


def _match_channels(img: np.ndarray, channels: int) -> np.ndarray:
    if img.shape[2] == channels:
        return img
    if channels == 1:
        return img.mean(axis=2, keepdims=True)
    return np.repeat(img, 3, axis=2)


def load_style_bank(ds: LabeledDataset, style_dir, rng: np.random.Generator) -> LabeledDataset:
    """Append one pre-generated styled variant per original: |out| = 2|in|.

    The bank directory holds a manifest (id<TAB>style<TAB>relative path) plus
    the styled image files, produced by an external style-transfer model.
    """
    mapping = _read_manifest(style_dir)
    missing = [i for i in ds.ids if i not in mapping]
    if missing:
        raise DataError(f"style bank is missing styled variants for {len(missing)} ids: "
                        + ", ".join(missing[:10]) + ("..." if len(missing) > 10 else ""))

    h, w, c = ds.image_shape
    styled = np.empty_like(ds.images)
    chosen = []
    for i, image_id in enumerate(ds.ids):
        variants = mapping[image_id]
        style, rel = variants[int(rng.integers(len(variants)))]
        path = os.path.join(style_dir, rel)
        try:
            img = read_image(path)
        except OSError as e:
            raise DataError(f"unreadable style bank file {path}: {e}") from e
        img = _match_channels(img, c)
        if img.shape != (h, w, c):
            raise DataError(f"styled variant {path} has shape {img.shape}, dataset is {(h, w, c)}")
        styled[i] = img
        chosen.append(style)
    return LabeledDataset(
        images=np.concatenate([ds.images, styled], axis=0),
        labels=np.concatenate([ds.labels, ds.labels]),
        ids=list(ds.ids) + [f"{i}#style:{s}" for i, s in zip(ds.ids, chosen)],
        class_names=ds.class_names,
        norm_stats=None,
    )


# ---------------------------------------------------------------------------
# pair sampling for the augmentation network
# ---------------------------------------------------------------------------

@dataclass
class PairSample:
    img_a: np.ndarray
    img_b: np.ndarray
    target: np.ndarray
    class_index: int


def sample_pair(ds: LabeledDataset, class_index: int, rng: np.random.Generator,
                control: bool = False) -> PairSample:
    """Draw (img_a, img_b, target) independently and uniformly with
    replacement from one class; control mode duplicates img_a into img_b."""
    members = np.flatnonzero(ds.labels == class_index)
    if members.size == 0:
        raise DataError(f"class {class_index} has no images to pair")
    ia, ib, it = (int(v) for v in rng.integers(0, members.size, size=3))
    if control:
        ib = ia
    return PairSample(
        img_a=ds.images[members[ia]],
        img_b=ds.images[members[ib]],
        target=ds.images[members[it]],
        class_index=class_index,
    )


def concat_pair(pair: PairSample) -> np.ndarray:
    """Channel-concatenate the pair, img_a occupying the first C channels."""
    if pair.img_a.shape != pair.img_b.shape:
        raise ValueError(f"pair images differ in shape: {pair.img_a.shape} vs {pair.img_b.shape}")
    return np.concatenate([pair.img_a, pair.img_b], axis=2)


def sample_pair_batch(ds: LabeledDataset, batch_size: int, rng: np.random.Generator,
                      control: bool = False):
    """Assemble a pair minibatch: concatenated inputs (B, H, W, 2C), targets
    (B, H, W, C), and per-pair class labels. Classes are drawn uniformly."""
    h, w, c = ds.image_shape
    inputs = np.empty((batch_size, h, w, 2 * c), dtype=np.float64)
    targets = np.empty((batch_size, h, w, c), dtype=np.float64)
    labels = np.empty(batch_size, dtype=np.int64)
    for b in range(batch_size):
        cls = int(rng.integers(0, 2))
        pair = sample_pair(ds, cls, rng, control=control)
        inputs[b] = concat_pair(pair)
        targets[b] = pair.target
        labels[b] = cls
    return inputs, targets, labels
