"""Experiment configuration: a flat `key = value` file with `#` comments and
dotted keys, parsed into :class:`ExperimentConfig`."""

from __future__ import annotations

import os
from dataclasses import dataclass

__all__ = ["ConfigError", "ExperimentConfig", "parse_config"]

AUG_MODES = ("none", "traditional", "style_bank", "neural", "control")
AUG_LOSSES = ("none", "content", "style")


class ConfigError(ValueError):
    """Raised for unparsable or inconsistent experiment configs."""


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    # dataset
    dataset_kind: str = "image_dir"  # idx | image_dir
    idx_images: str | None = None
    idx_labels: str | None = None
    idx_classes: tuple[int, int] = (0, 8)
    image_root: str | None = None
    class_a: str = "a"
    class_b: str = "b"
    per_class_cap: int = 500
    test_fraction: float = 0.0
    resize_to: tuple[int, int] | None = None
    # augmentation
    aug_mode: str = "none"
    aug_loss: str = "none"
    style_dir: str | None = None
    # loss weights and training protocol (defaults follow the study setup)
    alpha: float = 0.75
    beta: float = 0.25
    lr: float = 1e-4
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    output_dir: str = "out"
    norm: str = "standardize"  # standardize | minmax
    cls_loss: str = "sigmoid_bce"  # sigmoid_bce | softmax
    bn_eval_on_augmented: bool = False
    loss_reduction: str = "mean"  # mean | sum
    dropout_rate: float = 0.5
    samples_per_epoch: int = 2

    def validate(self) -> None:
        if self.dataset_kind not in ("idx", "image_dir"):
            raise ConfigError(f"dataset.kind must be idx or image_dir, got {self.dataset_kind!r}")
        if self.dataset_kind == "idx" and (not self.idx_images or not self.idx_labels):
            raise ConfigError("idx datasets need dataset.images and dataset.labels paths")
        if self.dataset_kind == "image_dir" and not self.image_root:
            raise ConfigError("image_dir datasets need a dataset.root path")
        if self.aug_mode not in AUG_MODES:
            raise ConfigError(f"aug.mode must be one of {AUG_MODES}, got {self.aug_mode!r}")
        if self.aug_loss not in AUG_LOSSES:
            raise ConfigError(f"aug.loss must be one of {AUG_LOSSES}, got {self.aug_loss!r}")
        if self.aug_loss != "none" and self.aug_mode not in ("neural", "control"):
            raise ConfigError(f"aug.loss={self.aug_loss!r} is only meaningful for "
                              "aug.mode neural or control")
        if self.aug_mode == "style_bank" and not self.style_dir:
            raise ConfigError("style_bank mode needs aug.style_dir")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("alpha and beta must be nonnegative with alpha + beta > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not (0.0 <= self.test_fraction < 1.0):
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.norm not in ("standardize", "minmax"):
            raise ConfigError(f"norm must be standardize or minmax, got {self.norm!r}")
        if self.cls_loss not in ("sigmoid_bce", "softmax"):
            raise ConfigError(f"cls_loss must be sigmoid_bce or softmax, got {self.cls_loss!r}")
        if self.loss_reduction not in ("mean", "sum"):
            raise ConfigError(f"loss_reduction must be mean or sum, got {self.loss_reduction!r}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError("dropout_rate must lie in [0, 1)")


def _parse_bool(value: str, key: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_pair(value: str, key: str) -> tuple[int, int]:
    parts = [p.strip() for p in value.replace("x", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated values, got {value!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"{key}: expected integers, got {value!r}") from None


_KEYS = {
    "name": ("name", str),
    "dataset.kind": ("dataset_kind", str),
    "dataset.images": ("idx_images", str),
    "dataset.labels": ("idx_labels", str),
    "dataset.classes": ("idx_classes", "pair"),
    "dataset.root": ("image_root", str),
    "dataset.class_a": ("class_a", str),
    "dataset.class_b": ("class_b", str),
    "dataset.per_class_cap": ("per_class_cap", int),
    "dataset.test_fraction": ("test_fraction", float),
    "dataset.resize": ("resize_to", "pair"),
    "aug.mode": ("aug_mode", str),
    "aug.loss": ("aug_loss", str),
    "aug.style_dir": ("style_dir", str),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "lr": ("lr", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "seed": ("seed", int),
    "output_dir": ("output_dir", str),
    "norm": ("norm", str),
    "cls_loss": ("cls_loss", str),
    "bn_eval_on_augmented": ("bn_eval_on_augmented", bool),
    "loss_reduction": ("loss_reduction", str),
    "dropout_rate": ("dropout_rate", float),
    "samples_per_epoch": ("samples_per_epoch", int),
}


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a config file; unknown keys are errors."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cfg = ExperimentConfig(name=os.path.splitext(os.path.basename(path))[0])
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            attr, kind = _KEYS[key]
            try:
                if kind is str:
                    parsed = value
                elif kind is int:
                    parsed = int(value)
                elif kind is float:
                    parsed = float(value)
                elif kind is bool:
                    parsed = _parse_bool(value, key)
                else:  # pair
                    parsed = _parse_pair(value, key)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: cannot parse {value!r} for {key}") from None
            setattr(cfg, attr, parsed)
    cfg.validate()
    return cfg
