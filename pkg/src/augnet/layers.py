"""Differentiable layer primitives: conv2d, batchnorm, maxpool, dense, activations, dropout.

Image batches are laid out (N, H, W, C). Convolutions are stride-1 with
'same' or 'valid' padding; pooling is fixed 2x2/2x2. Forward passes use
im2col + BLAS matmuls; backward passes are hand-derived and validated by the
finite-difference suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, apply_op

__all__ = [
    "Conv2dParams",
    "BatchNormParams",
    "DenseParams",
    "conv2d",
    "batchnorm",
    "maxpool2d",
    "dense",
    "activation",
    "relu",
    "sigmoid",
    "dropout",
    "init_conv_params",
    "init_batchnorm_params",
    "init_dense_params",
]


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class Conv2dParams:
    kernel: Tensor  # (kh, kw, Cin, Cout)
    bias: Tensor  # (Cout,)
    padding: str = "same"  # same | valid
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if tuple(self.stride) != (1, 1):
            raise ValueError("only stride (1, 1) convolutions are supported")
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv kernel must be rank 4, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ShapeError("conv bias extent must match output channels")


@dataclass
class BatchNormParams:
    gamma: Tensor  # (C,)
    beta: Tensor  # (C,)
    running_mean: Tensor  # (C,)
    running_var: Tensor  # (C,)
    momentum: float = 0.9
    epsilon: float = 1e-5
    mode: str = "train"

    def __post_init__(self):
        if not (0.0 < self.momentum < 1.0):
            raise ValueError("momentum must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class DenseParams:
    weight: Tensor  # (in, out)
    bias: Tensor  # (out,)


def init_conv_params(rng: np.random.Generator, kh: int, kw: int, cin: int, cout: int,
                     padding: str = "same") -> Conv2dParams:
    """He-style init: kernel ~ N(0, 2/fan_in), bias zero."""
    std = np.sqrt(2.0 / (kh * kw * cin))
    kernel = Tensor(rng.normal(0.0, std, size=(kh, kw, cin, cout)), requires_grad=True)
    bias = Tensor(np.zeros(cout), requires_grad=True)
    return Conv2dParams(kernel=kernel, bias=bias, padding=padding)


def init_batchnorm_params(c: int, momentum: float = 0.9, epsilon: float = 1e-5) -> BatchNormParams:
    return BatchNormParams(
        gamma=Tensor(np.ones(c), requires_grad=True),
        beta=Tensor(np.zeros(c), requires_grad=True),
        running_mean=Tensor(np.zeros(c)),
        running_var=Tensor(np.ones(c)),
        momentum=momentum,
        epsilon=epsilon,
    )


def init_dense_params(rng: np.random.Generator, n_in: int, n_out: int) -> DenseParams:
    std = np.sqrt(2.0 / n_in)
    weight = Tensor(rng.normal(0.0, std, size=(n_in, n_out)), requires_grad=True)
    bias = Tensor(np.zeros(n_out), requires_grad=True)
    return DenseParams(weight=weight, bias=bias)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _pad_amounts(kh: int, kw: int, padding: str) -> tuple[int, int, int, int]:
    if padding == "valid":
        return 0, 0, 0, 0
    pt = (kh - 1) // 2
    pl = (kw - 1) // 2
    return pt, kh - 1 - pt, pl, kw - 1 - pl


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gather all kh x kw patches of x (N,H,W,C) into rows (N*Ho*Wo, kh*kw*C)."""
    x = np.ascontiguousarray(x)
    n, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    sn, sh, sw, sc = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (n, ho, wo, kh, kw, c), (sn, sh, sw, sh, sw, sc), writeable=False
    )
    return view.reshape(n * ho * wo, kh * kw * c)


def _conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, padding: str) -> np.ndarray:
    kh, kw, cin, cout = kernel.shape
    pt, pb, pl, pr = _pad_amounts(kh, kw, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    n, hp, wp, _ = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    cols = _im2col(xp, kh, kw)
    out = cols @ kernel.reshape(kh * kw * cin, cout) + bias
    return out.reshape(n, ho, wo, cout)


def _conv2d_grad_kernel(x: np.ndarray, g: np.ndarray, kernel_shape, padding: str) -> np.ndarray:
    kh, kw, cin, cout = kernel_shape
    pt, pb, pl, pr = _pad_amounts(kh, kw, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = _im2col(xp, kh, kw)
    return (cols.T @ g.reshape(-1, cout)).reshape(kh, kw, cin, cout)


def _conv2d_grad_input(kernel: np.ndarray, g: np.ndarray, padding: str) -> np.ndarray:
    # full correlation of the output gradient with the spatially flipped
    # kernel, in/out channels swapped
    kh, kw, cin, cout = kernel.shape
    pt, pb, pl, pr = _pad_amounts(kh, kw, padding)
    gp = np.pad(g, ((0, 0), (kh - 1 - pt, kh - 1 - pb), (kw - 1 - pl, kw - 1 - pr), (0, 0)))
    wr = kernel[::-1, ::-1].transpose(0, 1, 3, 2)  # (kh, kw, Cout, Cin)
    n, hp, wp, _ = gp.shape
    cols = _im2col(gp, kh, kw)
    dx = cols @ wr.reshape(kh * kw * cout, cin)
    return dx.reshape(n, hp - kh + 1, wp - kw + 1, cin)


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """Stride-1 2-D convolution over (N, H, W, Cin) producing (N, H', W', Cout)."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4, got {x.shape}")
    kh, kw, cin, cout = p.kernel.shape
    if x.shape[3] != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[3]}, kernel expects {cin}")
    if p.padding == "valid" and (x.shape[1] < kh or x.shape[2] < kw):
        raise ShapeError("valid conv2d needs spatial extents >= kernel extents")
    if p.padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
        raise ShapeError("same padding requires odd kernel extents")

    out = _conv2d_forward(x.data, p.kernel.data, p.bias.data, p.padding)
    xd, kd, padding = x.data, p.kernel.data, p.padding

    def bwd(g):
        db = g.sum(axis=(0, 1, 2))
        dk = _conv2d_grad_kernel(xd, g, kd.shape, padding)
        dx = _conv2d_grad_input(kd, g, padding)
        return dx, dk, db

    return apply_op((x, p.kernel, p.bias), out, bwd)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

def batchnorm(x: Tensor, p: BatchNormParams, mode: str | None = None) -> Tensor:
    """Per-channel batch normalization over the (N, H, W) axes.

    Train mode normalizes with batch statistics and updates the running
    stats in place; eval mode normalizes with the stored running stats.
    """
    mode = p.mode if mode is None else mode
    if mode not in ("train", "eval"):
        raise ValueError(f"batchnorm mode must be train or eval, got {mode!r}")
    if x.ndim != 4:
        raise ShapeError(f"batchnorm input must be rank 4, got {x.shape}")
    c = x.shape[3]
    if p.gamma.shape != (c,):
        raise ShapeError(f"batchnorm parameter extent {p.gamma.shape} does not match channels {c}")

    eps = p.epsilon
    if mode == "eval":
        ivar = 1.0 / np.sqrt(p.running_var.data + eps)
        xhat = (x.data - p.running_mean.data) * ivar
        out = p.gamma.data * xhat + p.beta.data
        gd = p.gamma.data

        def bwd_eval(g):
            dx = g * gd * ivar
            dgamma = (g * xhat).sum(axis=(0, 1, 2))
            dbeta = g.sum(axis=(0, 1, 2))
            return dx, dgamma, dbeta

        return apply_op((x, p.gamma, p.beta), out, bwd_eval)

    m = x.shape[0] * x.shape[1] * x.shape[2]
    if m < 2:
        raise ValueError("train-mode batchnorm needs at least 2 elements per channel")
    mean = x.data.mean(axis=(0, 1, 2))
    var = x.data.var(axis=(0, 1, 2))
    ivar = 1.0 / np.sqrt(var + eps)
    xc = x.data - mean
    xhat = xc * ivar
    out = p.gamma.data * xhat + p.beta.data

    mom = p.momentum
    p.running_mean.data = mom * p.running_mean.data + (1.0 - mom) * mean
    p.running_var.data = mom * p.running_var.data + (1.0 - mom) * var

    gd = p.gamma.data

    def bwd_train(g):
        dxhat = g * gd
        dvar = (dxhat * xc).sum(axis=(0, 1, 2)) * (-0.5) * ivar**3
        dmean = -(dxhat.sum(axis=(0, 1, 2))) * ivar + dvar * (-2.0 / m) * xc.sum(axis=(0, 1, 2))
        dx = dxhat * ivar + dvar * (2.0 / m) * xc + dmean / m
        dgamma = (g * xhat).sum(axis=(0, 1, 2))
        dbeta = g.sum(axis=(0, 1, 2))
        return dx, dgamma, dbeta

    return apply_op((x, p.gamma, p.beta), out, bwd_train)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient goes to the first maximum of
    each window in row-major order."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d input must be rank 4, got {x.shape}")
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial extents, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = x.data.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    idx = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        gw = np.zeros((n, ho, wo, c, 4), dtype=np.float64)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        return (gw.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c),)

    return apply_op((x,), out, bwd)


# ---------------------------------------------------------------------------
# dense / activations / dropout
# ---------------------------------------------------------------------------

def dense(x: Tensor, p: DenseParams) -> Tensor:
    """Affine map x @ W + b over rows of a rank-2 input."""
    if x.ndim != 2:
        raise ShapeError(f"dense input must be rank 2, got {x.shape}")
    if x.shape[1] != p.weight.shape[0]:
        raise ShapeError(f"dense extent mismatch: input {x.shape[1]}, weight expects {p.weight.shape[0]}")
    out = x.data @ p.weight.data + p.bias.data
    xd, wd = x.data, p.weight.data

    def bwd(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return apply_op((x, p.weight, p.bias), out, bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # gradient is zero at exactly 0
    out = np.where(mask, x.data, 0.0)

    def bwd(g):
        return (g * mask,)

    return apply_op((x,), out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows for |x| <= 700
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return apply_op((x,), out, bwd)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train zeroes with probability `rate` and rescales
    survivors by 1/(1-rate); eval is the identity. The mask is recorded so
    backward matches forward."""
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be train or eval, got {mode!r}")
    if mode == "eval" or rate == 0.0:
        def bwd_id(g):
            return (g,)

        return apply_op((x,), x.data, bwd_id)

    if rng is None:
        raise ValueError("train-mode dropout needs a seeded rng")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = np.where(keep, x.data * scale, 0.0)

    def bwd(g):
        return (np.where(keep, g * scale, 0.0),)

    return apply_op((x,), out, bwd)
