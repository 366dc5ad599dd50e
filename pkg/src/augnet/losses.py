"""Loss functions: per-class sigmoid cross entropy on scores, pixel content
loss, Gram-matrix style loss, and their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    apply_op,
    contains_nonfinite,
    matmul,
    mul,
    permute,
    reduce,
    reshape,
    sub,
)

__all__ = [
    "LossConfig",
    "classification_loss",
    "content_loss",
    "gram",
    "style_loss",
    "combined_loss",
    "batch_content_loss",
    "batch_style_loss",
    "predict",
    "accuracy",
]


@dataclass
class LossConfig:
    aug_mode: str = "none"  # none | content | style
    alpha: float = 0.75
    beta: float = 0.25

    def __post_init__(self):
        if self.aug_mode not in ("none", "content", "style"):
            raise ValueError(f"aug_mode must be none, content, or style, got {self.aug_mode!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.aug_mode == "none":
            self.beta = 0.0
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")

    def validate_channels(self, channels: int) -> None:
        # a 1-channel Gram matrix is a single energy value; style mode is
        # rejected for grayscale data
        if self.aug_mode == "style" and channels == 1:
            raise ValueError("style augmentation loss is undefined for grayscale (1-channel) data")


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def _onehot(labels: np.ndarray, classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be rank 1, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integer class indices")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= classes:
        raise ValueError(f"labels must lie in [0, {classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    y = np.zeros((labels.size, classes), dtype=np.float64)
    y[np.arange(labels.size), labels] = 1.0
    return y


def classification_loss(scores: Tensor, labels: np.ndarray, kind: str = "sigmoid_bce") -> Tensor:
    """Mean cross entropy of the two class scores against one-hot targets.

    `sigmoid_bce` (the default) is per-class binary cross entropy on the
    score sigmoids; `softmax` is standard softmax cross entropy. Both use
    overflow-free forms (safe for |score| <= 700).
    """
    if scores.ndim != 2 or scores.shape[1] != 2:
        raise ShapeError(f"scores must be (N, 2), got {scores.shape}")
    y = _onehot(labels)
    if y.shape[0] != scores.shape[0]:
        raise ShapeError("scores and labels disagree on batch size")
    n = scores.shape[0]
    z = scores.data

    if kind == "sigmoid_bce":
        # -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y*z
        value = (_softplus(z) - y * z).sum() / n
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                       np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

        def bwd(g):
            return (g * (sig - y) / n,)

        return apply_op((scores,), np.float64(value), bwd)

    if kind == "softmax":
        zmax = z.max(axis=1, keepdims=True)
        logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        value = (logsumexp - z[np.arange(n), np.asarray(labels)]).sum() / n
        soft = np.exp(z - zmax)
        soft /= soft.sum(axis=1, keepdims=True)

        def bwd_softmax(g):
            return (g * (soft - y) / n,)

        return apply_op((scores,), np.float64(value), bwd_softmax)

    raise ValueError(f"unknown classification loss kind {kind!r}")


def content_loss(a: Tensor, t: Tensor) -> Tensor:
    """Pixel loss (1/D^2) * sum((A - T)^2) over a square (D, D, C) image."""
    if a.ndim != 3 or a.shape != t.shape:
        raise ShapeError(f"content_loss needs equal (H, W, C) shapes, got {a.shape} and {t.shape}")
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"content_loss image must be square, got {a.shape}")
    d = a.shape[0]
    diff = sub(a, t)
    return mul(reduce(mul(diff, diff), "sum"), 1.0 / (d * d))


def gram(f: Tensor) -> Tensor:
    """Channel Gram matrix of an (H, W, C) map: rows are flattened channel
    planes, G = M @ M^T, shape (C, C)."""
    if f.ndim != 3:
        raise ShapeError(f"gram expects (H, W, C), got {f.shape}")
    h, w, c = f.shape
    m = reshape(permute(f, (2, 0, 1)), (c, h * w))
    return matmul(m, permute(m, (1, 0)))


def style_loss(a: Tensor, t: Tensor) -> Tensor:
    """(1/C^2) * sum((G_A - G_T)^2) over the channel Gram matrices."""
    if a.ndim != 3 or a.shape != t.shape:
        raise ShapeError(f"style_loss needs equal (H, W, C) shapes, got {a.shape} and {t.shape}")
    c = a.shape[2]
    diff = sub(gram(a), gram(t))
    return mul(reduce(mul(diff, diff), "sum"), 1.0 / (c * c))


def combined_loss(lc: Tensor, la: Tensor | None, cfg: LossConfig) -> Tensor:
    """alpha * Lc + beta * La; with aug_mode none this is just alpha * Lc."""
    if contains_nonfinite(lc) or (la is not None and contains_nonfinite(la)):
        raise FloatingPointError("combined_loss inputs must be finite")
    weighted = mul(lc, cfg.alpha)
    if cfg.aug_mode == "none" or la is None or cfg.beta == 0.0:
        return weighted
    return add(weighted, mul(la, cfg.beta))


def batch_content_loss(a: Tensor, t: Tensor, reduction: str = "mean") -> Tensor:
    """Per-image content loss over a batch (N, D, D, C), reduced by mean or sum."""
    if a.ndim != 4 or a.shape != t.shape:
        raise ShapeError(f"batch content loss needs equal (N, H, W, C) shapes, got {a.shape} and {t.shape}")
    if a.shape[1] != a.shape[2]:
        raise ShapeError("batch content loss needs square images")
    d = a.shape[1]
    diff = sub(a, t)
    per_image = reduce(mul(diff, diff), "sum", axes=(1, 2, 3))
    total = reduce(per_image, "mean" if reduction == "mean" else "sum")
    return mul(total, 1.0 / (d * d))


def batch_style_loss(a: Tensor, t: Tensor, reduction: str = "mean") -> Tensor:
    """Per-image style loss over a batch, reduced by mean or sum."""
    if a.ndim != 4 or a.shape != t.shape:
        raise ShapeError(f"batch style loss needs equal (N, H, W, C) shapes, got {a.shape} and {t.shape}")
    n = a.shape[0]
    # per-sample grams need rank-3 slices; slicing is its own tape op
    total: Tensor | None = None
    for i in range(n):
        li = style_loss(_slice_batch(a, i), _slice_batch(t, i))
        total = li if total is None else add(total, li)
    if reduction == "mean":
        return mul(total, 1.0 / n)
    return total


def _slice_batch(t: Tensor, i: int) -> Tensor:
    """Select sample i of a batch (N, ...) as a rank-(k-1) tensor."""
    n = t.shape[0]
    rest = t.shape[1:]

    def bwd(g):
        full = np.zeros(t.shape, dtype=np.float64)
        full[i] = g
        return (full,)

    return apply_op((t,), t.data[i], bwd)


def predict(scores) -> np.ndarray:
    """Argmax class per row; ties break to the lower index."""
    data = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    if data.ndim != 2:
        raise ShapeError(f"predict expects (N, classes), got {data.shape}")
    return np.argmax(data, axis=1)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ShapeError("predictions and labels must have equal shapes")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float((predictions == labels).mean())
