"""Deterministic synthetic datasets for demos and tests.

Two generators: a color/texture-separable two-class RGB image directory
(stands in for the downscaled photo benchmark), and a two-digit ring
renderer that writes IDX files (stands in for the handwritten 0-vs-8 subset
when the real files are absent). A style-bank builder produces deterministic
recolored variants standing in for externally generated style transfers.
"""

from __future__ import annotations

import os

import numpy as np

from .augment import MANIFEST_NAME
from .data import LabeledDataset, write_image

__all__ = [
    "generate_image_dir",
    "generate_digit_idx",
    "make_style_bank",
    "STYLE_NAMES",
]

STYLE_NAMES = ("cezanne", "enhance", "monet", "ukiyoe", "vangogh", "winter")


def _smooth(img: np.ndarray, passes: int = 1) -> np.ndarray:
    """Cheap separable [1 2 1]/4 blur, edge-replicated."""
    for _ in range(passes):
        p = np.pad(img, ((1, 1), (1, 1)) + ((0, 0),) * (img.ndim - 2), mode="edge")
        img = 0.25 * (2 * p[1:-1, 1:-1] + 0.5 * (p[:-2, 1:-1] + p[2:, 1:-1]
                                                 + p[1:-1, :-2] + p[1:-1, 2:]))
    return img


# ---------------------------------------------------------------------------
# two-class RGB image directory
# ---------------------------------------------------------------------------

def _textured_image(rng: np.random.Generator, size: int, base: np.ndarray,
                    vertical: bool) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    freq = rng.uniform(0.15, 0.45)
    phase = rng.uniform(0, 2 * np.pi)
    coord = xx if vertical else yy
    stripes = 0.5 + 0.5 * np.sin(freq * coord + phase)
    img = base + 0.25 * (stripes[..., None] - 0.5)

    # one soft highlight blob at a random spot
    cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
    r = rng.uniform(0.12 * size, 0.25 * size)
    blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)))
    img = img + 0.3 * blob[..., None] * rng.uniform(-1.0, 1.0, size=3)

    img = img + rng.normal(0.0, 0.06, size=img.shape)
    return np.clip(_smooth(img), 0.0, 1.0)


def generate_image_dir(root, n_per_class: int, size: int = 64, seed: int = 0,
                       class_names: tuple[str, str] = ("amber", "teal")) -> tuple[str, str]:
    """Write `<root>/<class>/img_#####.png` files for two separable classes.

    Class 0 is warm-toned with horizontal texture, class 1 cool-toned with
    vertical texture. Deterministic under the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51D3]))
    bases = (np.array([0.65, 0.45, 0.25]), np.array([0.25, 0.45, 0.65]))
    for label, name in enumerate(class_names):
        class_dir = os.path.join(root, name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(n_per_class):
            base = bases[label] + rng.normal(0.0, 0.05, size=3)
            img = _textured_image(rng, size, base, vertical=(label == 1))
            write_image(os.path.join(class_dir, f"img_{i:05d}.png"), img)
    return class_names


# ---------------------------------------------------------------------------
# ring-digit IDX files
# ---------------------------------------------------------------------------

def _ring(yy, xx, cy, cx, ry, rx, angle_deg, thickness, brightness):
    a = np.deg2rad(angle_deg)
    yr = (yy - cy) * np.cos(a) + (xx - cx) * np.sin(a)
    xr = -(yy - cy) * np.sin(a) + (xx - cx) * np.cos(a)
    d = np.sqrt((yr / ry) ** 2 + (xr / rx) ** 2)
    s = (d - 1.0) * 0.5 * (ry + rx)
    return brightness * np.exp(-((s / thickness) ** 2))


def _draw_zero(rng, yy, xx):
    cy, cx = 13.5 + rng.uniform(-1.5, 1.5, size=2)
    ry = rng.uniform(7.5, 10.0)
    rx = rng.uniform(5.0, 7.5)
    return _ring(yy, xx, cy, cx, ry, rx, rng.uniform(-20, 20),
                 rng.uniform(1.1, 2.0), rng.uniform(0.75, 1.0))


def _draw_eight(rng, yy, xx):
    cy, cx = 13.5 + rng.uniform(-1.0, 1.0, size=2)
    ry_t = rng.uniform(3.6, 4.8)
    rx_t = rng.uniform(3.0, 4.4)
    ry_b = ry_t * rng.uniform(1.05, 1.25)
    rx_b = rx_t * rng.uniform(1.0, 1.2)
    jt = rng.uniform(-0.8, 0.8)
    top = _ring(yy, xx, cy - 0.95 * ry_t, cx + jt, ry_t, rx_t,
                rng.uniform(-12, 12), rng.uniform(1.0, 1.8), rng.uniform(0.75, 1.0))
    bot = _ring(yy, xx, cy + 0.95 * ry_b, cx - jt, ry_b, rx_b,
                rng.uniform(-12, 12), rng.uniform(1.0, 1.8), rng.uniform(0.75, 1.0))
    return np.maximum(top, bot)


def generate_digit_idx(out_dir, n_per_class: int = 1000, seed: int = 0,
                       label_flip: float = 0.025) -> tuple[str, str]:
    """Render ring digits (0 and 8) into IDX image/label files.

    A `label_flip` fraction of labels is swapped so the achievable accuracy
    ceiling sits below 1, mimicking a lightly ambiguous handwritten set.
    Returns (images_path, labels_path); labels carry the original digit
    values 0 and 8.
    """
    import struct

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD161]))
    yy, xx = np.meshgrid(np.arange(28, dtype=np.float64), np.arange(28, dtype=np.float64),
                         indexing="ij")
    n = 2 * n_per_class
    images = np.empty((n, 28, 28), dtype=np.float64)
    digits = np.empty(n, dtype=np.uint8)
    order = rng.permutation(n)  # interleave classes in file order
    for slot, k in enumerate(order):
        is_eight = k >= n_per_class
        img = _draw_eight(rng, yy, xx) if is_eight else _draw_zero(rng, yy, xx)
        img = _smooth(img[..., None], passes=1)[..., 0]
        img = img + rng.normal(0.0, 0.05, size=img.shape)
        images[slot] = np.clip(img, 0.0, 1.0)
        digits[slot] = 8 if is_eight else 0

    n_flip = int(round(label_flip * n))
    if n_flip:
        flip_at = rng.choice(n, size=n_flip, replace=False)
        digits[flip_at] = 8 - digits[flip_at]

    os.makedirs(out_dir, exist_ok=True)
    images_path = os.path.join(out_dir, "digits-images-idx3-ubyte")
    labels_path = os.path.join(out_dir, "digits-labels-idx1-ubyte")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(np.round(images * 255).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(digits.tobytes())
    return images_path, labels_path


# ---------------------------------------------------------------------------
# style bank
# ---------------------------------------------------------------------------

def _stylize(img: np.ndarray, style: str, rng: np.random.Generator) -> np.ndarray:
    c = img.shape[2]
    if style == "cezanne":  # coarse posterization
        out = np.round(img * 5) / 5
    elif style == "enhance":  # contrast stretch about the mean
        out = 0.5 + 1.4 * (img - img.mean())
    elif style == "monet":  # soft blur with a pastel lift
        out = 0.85 * _smooth(img, passes=2) + 0.15
    elif style == "ukiyoe":  # flattened shading, warm tint
        out = np.sqrt(np.clip(img, 0, 1))
        if c == 3:
            out = out * np.array([1.05, 0.95, 0.85])
    elif style == "vangogh":  # swirled channel emphasis
        out = img.copy()
        if c == 3:
            out = out[:, :, [2, 0, 1]] * 0.7 + img * 0.3
        out = out + 0.05 * np.sin(np.linspace(0, 12, img.shape[0]))[:, None, None]
    elif style == "winter":  # cool, desaturated
        out = 0.6 * img + 0.3
        if c == 3:
            out = out * np.array([0.85, 0.95, 1.1])
    else:
        raise ValueError(f"unknown style {style!r}")
    return np.clip(out, 0.0, 1.0)


def make_style_bank(style_dir, ds: LabeledDataset, styles=STYLE_NAMES,
                    variants_per_image: int = 2, seed: int = 0) -> str:
    """Write a style bank (PNG variants + manifest) for every dataset image.

    Each image gets `variants_per_image` styles drawn from `styles`; stands
    in for a directory of externally generated style transfers.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x57B1]))
    os.makedirs(style_dir, exist_ok=True)
    lines = []
    for image_id, img in zip(ds.ids, ds.images):
        picks = rng.choice(len(styles), size=min(variants_per_image, len(styles)), replace=False)
        for p in picks:
            style = styles[int(p)]
            rel = f"{image_id}_{style}.png"
            write_image(os.path.join(style_dir, rel), _stylize(img, style, rng))
            lines.append(f"{image_id}\t{style}\t{rel}")
    manifest = os.path.join(style_dir, MANIFEST_NAME)
    with open(manifest, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return manifest
