"""The two fixed architectures: a compact convolutional classifier (SmallNet)
and the augmentation network (AugNet) that fuses a same-class image pair into
one synthetic image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .container import MODEL_MAGIC, read_container, write_container
from .tensor import ShapeError, Tensor, reshape

__all__ = [
    "InputSpec",
    "SmallNet",
    "AugNet",
    "build_models",
    "smallnet_forward",
    "augnet_forward",
    "param_count",
    "save_checkpoint",
    "load_checkpoint",
    "load_state",
]


@dataclass(frozen=True)
class InputSpec:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height % 4 or self.width % 4:
            raise ValueError(f"spatial extents must be divisible by 4, got {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")


class SmallNet:
    """Nine-layer classifier: conv16-relu, bn, pool, conv32-relu, conv32-relu,
    bn, pool, fc1024 + dropout, fc2."""

    def __init__(self, input_spec: InputSpec, rng: np.random.Generator, dropout_rate: float = 0.5):
        self.input_spec = input_spec
        self.dropout_rate = dropout_rate
        c = input_spec.channels
        self.conv1 = layers.init_conv_params(rng, 3, 3, c, 16)
        self.bn1 = layers.init_batchnorm_params(16)
        self.conv2 = layers.init_conv_params(rng, 3, 3, 16, 32)
        self.conv3 = layers.init_conv_params(rng, 3, 3, 32, 32)
        self.bn2 = layers.init_batchnorm_params(32)
        self.flat_features = (input_spec.height // 4) * (input_spec.width // 4) * 32
        self.fc1 = layers.init_dense_params(rng, self.flat_features, 1024)
        self.fc2 = layers.init_dense_params(rng, 1024, 2)

    def parameters(self) -> dict[str, Tensor]:
        return {
            "conv1.kernel": self.conv1.kernel,
            "conv1.bias": self.conv1.bias,
            "bn1.gamma": self.bn1.gamma,
            "bn1.beta": self.bn1.beta,
            "conv2.kernel": self.conv2.kernel,
            "conv2.bias": self.conv2.bias,
            "conv3.kernel": self.conv3.kernel,
            "conv3.bias": self.conv3.bias,
            "bn2.gamma": self.bn2.gamma,
            "bn2.beta": self.bn2.beta,
            "fc1.weight": self.fc1.weight,
            "fc1.bias": self.fc1.bias,
            "fc2.weight": self.fc2.weight,
            "fc2.bias": self.fc2.bias,
        }

    def state_tensors(self) -> dict[str, Tensor]:
        out = dict(self.parameters())
        out.update({
            "bn1.running_mean": self.bn1.running_mean,
            "bn1.running_var": self.bn1.running_var,
            "bn2.running_mean": self.bn2.running_mean,
            "bn2.running_var": self.bn2.running_var,
        })
        return out


class AugNet:
    """Five stacked convolutions mapping a channel-concatenated image pair
    (2C channels) to one C-channel image; the last layer has no activation."""

    def __init__(self, input_spec: InputSpec, rng: np.random.Generator):
        self.input_spec = input_spec
        c = input_spec.channels
        self.conv1 = layers.init_conv_params(rng, 3, 3, 2 * c, 16)
        self.conv2 = layers.init_conv_params(rng, 3, 3, 16, 16)
        self.conv3 = layers.init_conv_params(rng, 3, 3, 16, 16)
        self.conv4 = layers.init_conv_params(rng, 3, 3, 16, 16)
        self.conv5 = layers.init_conv_params(rng, 3, 3, 16, c)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, conv in enumerate((self.conv1, self.conv2, self.conv3, self.conv4, self.conv5), start=1):
            out[f"conv{i}.kernel"] = conv.kernel
            out[f"conv{i}.bias"] = conv.bias
        return out

    state_tensors = parameters


def smallnet_forward(net: SmallNet, batch: Tensor, mode: str,
                     rng: np.random.Generator | None = None,
                     bn_mode: str | None = None) -> Tensor:
    """Score a batch (N, H, W, C) into (N, 2). `bn_mode` overrides the
    batchnorm mode independently of dropout (used for augmented passes)."""
    spec = net.input_spec
    if batch.ndim != 4 or batch.shape[1:] != (spec.height, spec.width, spec.channels):
        raise ShapeError(f"smallnet input {batch.shape} does not match spec {spec}")
    bn = mode if bn_mode is None else bn_mode

    h = layers.relu(layers.conv2d(batch, net.conv1))
    h = layers.batchnorm(h, net.bn1, mode=bn)
    h = layers.maxpool2d(h)
    h = layers.relu(layers.conv2d(h, net.conv2))
    h = layers.relu(layers.conv2d(h, net.conv3))
    h = layers.batchnorm(h, net.bn2, mode=bn)
    h = layers.maxpool2d(h)
    h = reshape(h, (batch.shape[0], net.flat_features))
    h = layers.dense(h, net.fc1)
    h = layers.dropout(h, net.dropout_rate, mode, rng)
    return layers.dense(h, net.fc2)


def augnet_forward(net: AugNet, pair: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    """Map a concatenated pair (N, H, W, 2C) to an image batch (N, H, W, C)."""
    spec = net.input_spec
    if pair.ndim != 4 or pair.shape[3] != 2 * spec.channels:
        raise ShapeError(f"augnet input must have {2 * spec.channels} channels, got {pair.shape}")
    h = layers.relu(layers.conv2d(pair, net.conv1))
    h = layers.relu(layers.conv2d(h, net.conv2))
    h = layers.relu(layers.conv2d(h, net.conv3))
    h = layers.relu(layers.conv2d(h, net.conv4))
    return layers.conv2d(h, net.conv5)


def build_models(input_spec: InputSpec, seed: int,
                 dropout_rate: float = 0.5) -> tuple[SmallNet, AugNet, dict[str, Tensor]]:
    """Deterministically construct both networks; returns the merged named
    parameter collection as the third element."""
    rng_small = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    rng_aug = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    smallnet = SmallNet(input_spec, rng_small, dropout_rate=dropout_rate)
    augnet = AugNet(input_spec, rng_aug)
    params = {f"smallnet.{k}": v for k, v in smallnet.parameters().items()}
    params.update({f"augnet.{k}": v for k, v in augnet.parameters().items()})
    return smallnet, augnet, params


def param_count(params: dict[str, Tensor]) -> int:
    return sum(t.size for t in params.values())


def save_checkpoint(path, tensors: dict[str, Tensor]) -> None:
    write_container(path, {name: t.data for name, t in tensors.items()}, MODEL_MAGIC)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return read_container(path, MODEL_MAGIC)


def load_state(tensors: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into live tensors by name; shapes must match."""
    for name, t in tensors.items():
        if name not in arrays:
            raise KeyError(f"checkpoint missing parameter {name!r}")
        arr = arrays[name]
        if arr.shape != t.shape:
            raise ShapeError(f"checkpoint shape {arr.shape} does not match {name!r} {t.shape}")
        t.data = arr.astype(np.float64, copy=True)
