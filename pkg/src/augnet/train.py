"""Adam optimization, the plain and joint (augmentation network) training
loops, evaluation, and per-epoch metric tracking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import sample_pair_batch
from .data import DataError, LabeledDataset, SplitDataset
from .losses import (
    LossConfig,
    accuracy,
    batch_content_loss,
    batch_style_loss,
    classification_loss,
    combined_loss,
    predict,
)
from .models import AugNet, SmallNet, augnet_forward, smallnet_forward
from .tensor import GradientMap, Tape, Tensor, backward, contains_nonfinite

__all__ = [
    "TrainingDivergedError",
    "AdamState",
    "init_adam",
    "adam_step",
    "EpochRecord",
    "MetricsHistory",
    "train_plain",
    "train_neural",
    "evaluate",
    "epoch_rng",
]


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss stops being finite."""


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params: dict[str, Tensor], grads, state: AdamState) -> None:
    """One Adam update with bias correction, in place on the parameters.

    `grads` is a GradientMap (keyed by tensor) or a name-keyed dict of arrays.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        if isinstance(grads, GradientMap):
            g = grads.grad(p)
        else:
            g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.data.shape}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    aug_loss: float | None
    train_acc: float
    val_acc: float


@dataclass
class MetricsHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_params: dict[str, np.ndarray] | None = None

    @property
    def best_val_acc(self) -> float:
        return max(r.val_acc for r in self.records)

    @property
    def best_epoch(self) -> int:
        best = self.best_val_acc
        return next(r.epoch for r in self.records if r.val_acc == best)


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------

def epoch_rng(seed: int, epoch: int, salt: int = 0xE70C) -> np.random.Generator:
    """Reshuffling/dropout stream for one epoch, derived from (seed, epoch)."""
    return np.random.default_rng(np.random.SeedSequence([seed, salt, epoch]))


def _iter_batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        # train-mode batchnorm needs >= 2 elements; drop a trailing singleton
        if idx.size == 1 and n > 1:
            continue
        yield idx


def _check_finite(loss: Tensor) -> None:
    if contains_nonfinite(loss):
        raise TrainingDivergedError("training loss became non-finite")


def _snapshot(nets: list) -> dict[str, np.ndarray]:
    prefixes = ("smallnet", "augnet")
    out: dict[str, np.ndarray] = {}
    for prefix, net in zip(prefixes, nets):
        for name, t in net.state_tensors().items():
            out[f"{prefix}.{name}"] = t.data.copy()
    return out


def train_plain(net: SmallNet, data: SplitDataset, cfg, epoch_hook=None) -> MetricsHistory:
    """Classification-only training: per epoch, shuffle, minibatch cross
    entropy, Adam; validation accuracy recorded each epoch.

    `epoch_hook(epoch, history)` runs after each epoch; a truthy return stops
    training early (used by callers that watch a threshold).
    """
    if len(data.train) == 0:
        raise DataError("training split is empty")
    params = net.parameters()
    state = init_adam(params, lr=cfg.lr)
    history = MetricsHistory()
    best_acc = -1.0
    for epoch in range(cfg.epochs):
        rng = epoch_rng(cfg.seed, epoch)
        order = rng.permutation(len(data.train))
        losses: list[float] = []
        hits = 0
        seen = 0
        for idx in _iter_batches(len(data.train), cfg.batch_size, order):
            xb = Tensor(data.train.images[idx])
            yb = data.train.labels[idx]
            with Tape():
                scores = smallnet_forward(net, xb, "train", rng)
                loss = classification_loss(scores, yb, cfg.cls_loss)
                _check_finite(loss)
                grads = backward(loss)
            adam_step(params, grads, state)
            losses.append(loss.item())
            hits += int((predict(scores) == yb).sum())
            seen += idx.size
        val_acc = evaluate(net, data.val, cfg.batch_size)
        history.records.append(EpochRecord(epoch, float(np.mean(losses)), None, hits / seen, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            history.best_params = _snapshot([net])
        if epoch_hook is not None and epoch_hook(epoch, history):
            break
    return history


def train_neural(smallnet: SmallNet, augnet: AugNet, data: SplitDataset,
                 loss_cfg: LossConfig, cfg, control: bool = False,
                 epoch_hook=None) -> MetricsHistory:
    """Joint training: each step feeds one plain minibatch through the
    classifier, then one same-class pair minibatch through the augmentation
    network into the classifier under the weighted loss; the pair step
    updates both networks. Validation runs through the classifier alone."""
    if len(data.train) == 0:
        raise DataError("training split is empty")
    loss_cfg.validate_channels(data.train.image_shape[2])
    small_params = smallnet.parameters()
    aug_params = augnet.parameters()
    small_state = init_adam(small_params, lr=cfg.lr)
    aug_state = init_adam(aug_params, lr=cfg.lr)
    bn_mode_aug = "eval" if cfg.bn_eval_on_augmented else None

    history = MetricsHistory()
    best_acc = -1.0
    for epoch in range(cfg.epochs):
        rng = epoch_rng(cfg.seed, epoch)
        order = rng.permutation(len(data.train))
        losses: list[float] = []
        aug_losses: list[float] = []
        hits = 0
        seen = 0
        for idx in _iter_batches(len(data.train), cfg.batch_size, order):
            xb = Tensor(data.train.images[idx])
            yb = data.train.labels[idx]
            with Tape():
                scores = smallnet_forward(smallnet, xb, "train", rng)
                loss = classification_loss(scores, yb, cfg.cls_loss)
                _check_finite(loss)
                grads = backward(loss)
            adam_step(small_params, grads, small_state)
            losses.append(loss.item())
            hits += int((predict(scores) == yb).sum())
            seen += idx.size

            pairs, targets, pair_labels = sample_pair_batch(
                data.train, idx.size, rng, control=control)
            with Tape():
                augmented = augnet_forward(augnet, Tensor(pairs))
                aug_scores = smallnet_forward(smallnet, augmented, "train", rng,
                                              bn_mode=bn_mode_aug)
                lc = classification_loss(aug_scores, pair_labels, cfg.cls_loss)
                la = None
                if loss_cfg.aug_mode == "content":
                    la = batch_content_loss(augmented, Tensor(targets), cfg.loss_reduction)
                elif loss_cfg.aug_mode == "style":
                    la = batch_style_loss(augmented, Tensor(targets), cfg.loss_reduction)
                total = combined_loss(lc, la, loss_cfg)
                _check_finite(total)
                grads = backward(total)
            adam_step(small_params, grads, small_state)
            adam_step(aug_params, grads, aug_state)
            if la is not None:
                aug_losses.append(la.item())

        val_acc = evaluate(smallnet, data.val, cfg.batch_size)
        history.records.append(EpochRecord(
            epoch, float(np.mean(losses)),
            float(np.mean(aug_losses)) if aug_losses else None,
            hits / seen, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            history.best_params = _snapshot([smallnet, augnet])
        if epoch_hook is not None and epoch_hook(epoch, history):
            break
    return history


def evaluate(net: SmallNet, ds: LabeledDataset, batch_size: int = 128) -> float:
    """Eval-mode accuracy (dropout off, batchnorm on running stats)."""
    if len(ds) == 0:
        raise DataError("cannot evaluate an empty dataset")
    preds = np.empty(len(ds), dtype=np.int64)
    for start in range(0, len(ds), batch_size):
        stop = min(start + batch_size, len(ds))
        scores = smallnet_forward(net, Tensor(ds.images[start:stop]), "eval")
        preds[start:stop] = predict(scores)
    return accuracy(preds, ds.labels)
