"""Run outputs: the metrics CSV, the summary file, sample triptychs of the
augmentation network, and the accuracy-vs-epoch figure."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .data import denormalize  # noqa: E402
from .train import MetricsHistory  # noqa: E402

__all__ = [
    "METRICS_HEADER",
    "write_metrics_csv",
    "write_summary",
    "save_triptych",
    "save_accuracy_plot",
    "displayable",
]

METRICS_HEADER = "epoch,train_loss,aug_loss,train_acc,val_acc"


def write_metrics_csv(path, history: MetricsHistory) -> None:
    lines = [METRICS_HEADER]
    for r in history.records:
        aug = "" if r.aug_loss is None else f"{r.aug_loss:.6f}"
        lines.append(f"{r.epoch},{r.train_loss:.6f},{aug},{r.train_acc:.6f},{r.val_acc:.6f}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_summary(path, fields: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in fields.items():
            f.write(f"{key}: {value}\n")


def displayable(img: np.ndarray, norm_stats) -> np.ndarray:
    """Undo normalization and clamp to [0, 1] for rendering."""
    if norm_stats is not None:
        img = denormalize(img, norm_stats)
    return np.clip(img, 0.0, 1.0)


def _show(ax, img: np.ndarray, title: str) -> None:
    if img.shape[2] == 1:
        ax.imshow(img[:, :, 0], cmap="gray", vmin=0.0, vmax=1.0)
    else:
        ax.imshow(img)
    ax.set_title(title, fontsize=9)
    ax.axis("off")


def save_triptych(path, img_a: np.ndarray, img_b: np.ndarray, augmented: np.ndarray,
                  norm_stats=None, label: str | None = None) -> None:
    """Render (source A | source B | augmented) side by side to a PNG."""
    fig, axes = plt.subplots(1, 3, figsize=(6.6, 2.4))
    _show(axes[0], displayable(img_a, norm_stats), "source A")
    _show(axes[1], displayable(img_b, norm_stats), "source B")
    _show(axes[2], displayable(augmented, norm_stats), "augmented")
    if label:
        fig.suptitle(label, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def save_accuracy_plot(path, history: MetricsHistory, title: str = "") -> None:
    """Accuracy-vs-epoch figure rendered next to the CSV it mirrors."""
    epochs = [r.epoch for r in history.records]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, [r.train_acc for r in history.records], label="train")
    ax.plot(epochs, [r.val_acc for r in history.records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
