"""Dense float64 tensors with a gradient tape for reverse-mode differentiation.

Values are numpy arrays and are treated as immutable once produced. Operations
record onto the currently active :class:`Tape`; `backward` replays the tape in
reverse and returns a :class:`GradientMap`. Only rank-0 (scalar) broadcasting
is supported; everything else must shape-match exactly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "ShapeError",
    "elementwise",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "reduce",
    "reshape",
    "permute",
    "backward",
    "grad_check",
    "contains_nonfinite",
    "apply_op",
]


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class Tensor:
    """An n-dimensional float64 array, optionally participating in autodiff."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # small operator sugar; the functional forms below are the real API
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def contains_nonfinite(t: Tensor) -> bool:
    """Post-pass check: True if the tensor holds any NaN or Inf."""
    return not bool(np.isfinite(t.data).all())


class _TapeEntry:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive operations for one backward pass.

    A tape is single-use: `backward` consumes it. Recording is confined to
    one logical thread per training step.
    """

    def __init__(self):
        self._entries: list[_TapeEntry] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.remove(self)
        return False

    def __len__(self):
        return len(self._entries)

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward_fn) -> None:
        if self._consumed:
            raise RuntimeError("tape already consumed by backward; use a fresh Tape")
        self._entries.append(_TapeEntry(tuple(inputs), output, backward_fn))

    def reset(self) -> None:
        self._entries.clear()
        self._consumed = False


_ACTIVE_TAPES: list[Tape] = []


def _active_tape() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def apply_op(inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    """Create an op output and record it on the active tape.

    `backward_fn(grad_out) -> tuple` must return one gradient array (or None)
    per input. This is the extension point used by the layer and loss
    primitives.
    """
    tape = _active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(inputs, out, backward_fn)
    return out


class GradientMap:
    """Gradients keyed by tensor identity; unreached leaves read as zero."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def grad(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _check_elementwise_shapes(a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"elementwise operands must match or one must be rank-0, got {a.shape} and {b.shape}")


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # only rank-0 broadcasting exists, so any mismatch collapses to a scalar
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise_shapes(a, b)
    out = a.data + b.data

    def bwd(g):
        return _reduce_to_shape(g, a.shape), _reduce_to_shape(g, b.shape)

    return apply_op((a, b), out, bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise_shapes(a, b)
    out = a.data - b.data

    def bwd(g):
        return _reduce_to_shape(g, a.shape), _reduce_to_shape(-g, b.shape)

    return apply_op((a, b), out, bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise_shapes(a, b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _reduce_to_shape(g * bd, a.shape), _reduce_to_shape(g * ad, b.shape)

    return apply_op((a, b), out, bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise_shapes(a, b)
    # division by an exact zero yields Inf; callers flag it via contains_nonfinite
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    ad, bd = a.data, b.data

    def bwd(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            ga = g / bd
            gb = -g * ad / (bd * bd)
        return _reduce_to_shape(ga, a.shape), _reduce_to_shape(gb, b.shape)

    return apply_op((a, b), out, bwd)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(a, b, kind: str) -> Tensor:
    """Componentwise add/sub/mul/div with rank-0 broadcast only."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(a, b)


# ---------------------------------------------------------------------------
# matmul / shape ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return apply_op((a, b), out, bwd)


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    t = _as_tensor(t)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} to {shape}")
    old = t.shape

    def bwd(g):
        return (g.reshape(old),)

    return apply_op((t,), t.data.reshape(shape), bwd)


def permute(t: Tensor, axes: Sequence[int]) -> Tensor:
    t = _as_tensor(t)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(t.ndim)):
        raise ValueError(f"invalid permutation {axes} for rank {t.ndim}")
    inv = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return apply_op((t,), t.data.transpose(axes), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _normalize_axes(axes, rank: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(rank))
    if isinstance(axes, int):
        axes = (axes,)
    norm = []
    for ax in axes:
        ax = int(ax)
        if ax < -rank or ax >= rank:
            raise ValueError(f"axis {ax} invalid for rank {rank}")
        norm.append(ax % rank)
    if len(set(norm)) != len(norm):
        raise ValueError(f"duplicate axes in {axes}")
    return tuple(sorted(norm))


def reduce(t: Tensor, kind: str, axes=None, keepdims: bool = False) -> Tensor:
    """Reduce over `axes` (all axes when None) with kind sum, mean, or max.

    `max` routes its gradient to the first maximal element of each reduced
    slice in row-major order.
    """
    t = _as_tensor(t)
    axes_n = _normalize_axes(axes, t.ndim)
    if kind in ("sum", "mean"):
        out = t.data.sum(axis=axes_n, keepdims=keepdims)
        count = 1
        for ax in axes_n:
            count *= t.shape[ax]
        if kind == "mean":
            out = out / count
        in_shape = t.shape
        scale = 1.0 / count if kind == "mean" else 1.0

        def bwd(g):
            gk = g if keepdims else _restore_dims(g, axes_n, in_shape)
            return (np.broadcast_to(gk * scale, in_shape).copy(),)

        return apply_op((t,), out, bwd)

    if kind == "max":
        return _reduce_max(t, axes_n, keepdims)

    raise ValueError(f"unknown reduce kind {kind!r}")


def _restore_dims(g: np.ndarray, axes: tuple[int, ...], in_shape: tuple[int, ...]) -> np.ndarray:
    shape = list(in_shape)
    for ax in axes:
        shape[ax] = 1
    return g.reshape(shape)


def _reduce_max(t: Tensor, axes: tuple[int, ...], keepdims: bool) -> Tensor:
    data = t.data
    rank = data.ndim
    kept = [ax for ax in range(rank) if ax not in axes]
    # move reduced axes (in order) to the end; relative order keeps the
    # row-major first-maximum tie-break within each slice
    moved = np.transpose(data, kept + list(axes))
    kept_shape = moved.shape[: len(kept)]
    red = int(np.prod(moved.shape[len(kept):], dtype=np.int64)) if axes else 1
    flat = moved.reshape(kept_shape + (red,))
    idx = np.argmax(flat, axis=-1)
    out_kept = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    if keepdims:
        out = _restore_dims(out_kept, axes, t.shape) if axes else out_kept
    else:
        out = out_kept

    in_shape = t.shape
    inv_perm = np.argsort(kept + list(axes))

    def bwd(g):
        gk = g.reshape(kept_shape)
        gflat = np.zeros(kept_shape + (red,), dtype=np.float64)
        np.put_along_axis(gflat, idx[..., None], gk[..., None], axis=-1)
        gmoved = gflat.reshape(moved.shape)
        return (gmoved.transpose(inv_perm).reshape(in_shape),)

    return apply_op((t,), out, bwd)


# ---------------------------------------------------------------------------
# backward / gradient checking
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> GradientMap:
    """Walk the active tape in reverse from `loss`; consumes the tape.

    `loss` must be a scalar (rank 0 or shape [1]) produced on the active tape.
    """
    if loss.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("backward called with no active Tape")
    if not any(e.output is loss for e in tape._entries):
        raise RuntimeError("loss tensor is detached: not produced on the active tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape._entries):
        g_out = grads.get(id(entry.output))
        if g_out is None:
            continue
        in_grads = entry.backward_fn(g_out)
        for inp, gi in zip(entry.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            acc = grads.get(id(inp))
            if acc is None:
                grads[id(inp)] = np.asarray(gi, dtype=np.float64)
            else:
                grads[id(inp)] = acc + gi
    tape._entries.clear()
    tape._consumed = True
    return GradientMap(grads)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-3) -> float:
    """Max relative error between tape gradients of `f` and central differences.

    The numeric side never touches the tape: it re-evaluates `f` at
    coordinate-wise x +/- eps probes. Errors out if `f` is non-finite at any
    probe.
    """
    if x.size > 10_000:
        raise ValueError(f"grad_check input too large ({x.size} elements, limit 10000)")

    leaf = Tensor(x.data.copy(), requires_grad=True)
    with Tape():
        y = f(leaf)
        if y.size != 1:
            raise ShapeError("grad_check target function must return a scalar")
        if contains_nonfinite(y):
            raise FloatingPointError("function is non-finite at the evaluation point")
        analytic = backward(y).grad(leaf)

    def eval_at(arr: np.ndarray) -> float:
        v = f(Tensor(arr))
        if contains_nonfinite(v):
            raise FloatingPointError("function is non-finite at a finite-difference probe")
        return v.item()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        probe = flat.copy()
        probe[i] = flat[i] + eps
        up = eval_at(probe.reshape(x.shape))
        probe[i] = flat[i] - eps
        down = eval_at(probe.reshape(x.shape))
        nflat[i] = (up - down) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
