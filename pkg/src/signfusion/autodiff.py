"""Dense float64 tensors with reverse-mode automatic differentiation.

Every numeric value in the package flows through :class:`Tensor`. Operations
record their inputs and a backward closure on the output node; calling
``backward()`` on a scalar replays the recorded operations once each, in
reverse execution order, accumulating gradients into every reachable leaf
that requires them. :class:`Parameter` is a named leaf whose gradient
persists across backward passes until explicitly zeroed, which is what the
optimizer consumes.
"""

from __future__ import annotations

import itertools
import math
import os
from typing import Iterable, Sequence

import numpy as np

# Every array here is small enough that BLAS thread fan-out costs more than
# it saves; pin to one thread unless the user overrides.
if not os.environ.get("SIGNFUSION_BLAS_THREADS"):
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1, user_api="blas")
    except Exception:  # pragma: no cover - purely a performance knob
        pass

__all__ = [
    "ShapeError",
    "Tensor",
    "Parameter",
    "as_tensor",
    "matmul",
    "concat",
    "narrow",
    "slice_rows",
    "reshape",
    "transpose",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "tensor_sum",
    "tensor_mean",
    "layer_norm_affine",
    "softmax",
    "log_softmax",
    "take_rows",
    "conv_temporal",
    "grad_check",
]


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


_ids = itertools.count()

# Contractions with inner dimension up to this bound accumulate strictly
# left to right so results are bit-identical to a nested-loop evaluation.
_EXACT_MATMUL_INNER = 8


class Tensor:
    """A dense array of 64-bit reals plus its place in the gradient graph."""

    __slots__ = ("data", "requires_grad", "grad", "_id", "_parents",
                 "_backward", "_gtmp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._gtmp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable grad-requiring leaf.

        Only scalar outputs may seed a backward pass. Repeated calls keep
        adding into leaf gradients until :meth:`zero_grad` is called.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        # Node ids increase in execution order, so descending id order is a
        # valid reverse-topological order of the recorded operations.
        nodes = _reachable(self)
        nodes.sort(key=lambda t: t._id, reverse=True)
        self._gtmp = np.ones_like(self.data)
        for node in nodes:
            g = node._gtmp
            if g is None:
                continue
            node._gtmp = None
            if node._backward is None:
                # Leaf: persist the gradient if requested.
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                acc = parent._gtmp
                # Out-of-place accumulation: backward closures may hand the
                # same array to several parents, so stored grads are never
                # mutated in place.
                parent._gtmp = pg if acc is None else acc + pg

    # Operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named trainable leaf with a persistent, zero-initialized gradient."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _reachable(root: Tensor) -> list[Tensor]:
    # Nodes without requires_grad cannot pass gradient further; skip them.
    seen = {root._id}
    out = [root]
    stack = [root]
    while stack:
        node = stack.pop()
        for parent in node._parents:
            if parent.requires_grad and parent._id not in seen:
                seen.add(parent._id)
                out.append(parent)
                stack.append(parent)
    return out


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# Elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _node(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
            if b.requires_grad else None,
        )

    return _node(data, (a, b), backward)


# Linear algebra -----------------------------------------------------------


def _matmul_pinned(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Left-to-right accumulation over the contracted axis; bit-identical to
    # the nested-loop definition, used only for small contractions.
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(
            f"matmul expects 2-D operands, got {a.shape} @ {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    if a.shape[1] <= _EXACT_MATMUL_INNER:
        data = _matmul_pinned(a.data, b.data)
    else:
        data = a.data @ b.data

    def backward(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return _node(data, (a, b), backward)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.transpose(a.data, axes)

    def backward(g):
        return (np.transpose(g, inverse),)

    return _node(data, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _node(data, (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = [0]
    for size in sizes:
        offsets.append(offsets[-1] + size)
    ndim = data.ndim
    norm_axis = axis % ndim
    head = (slice(None),) * norm_axis

    def backward(g):
        return tuple(
            g[head + (slice(offsets[i], offsets[i + 1]),)]
            for i in range(len(parts))
        )

    return _node(data, tuple(parts), backward)


def narrow(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; the gradient pads back with zeros."""
    a = as_tensor(a)
    index = tuple(
        slice(start, stop) if d == axis else slice(None) for d in range(a.ndim)
    )
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(data, (a,), backward)


def slice_rows(a, start: int, stop: int) -> Tensor:
    return narrow(a, 0, start, stop)


def take_rows(table, ids: Sequence[int]) -> Tensor:
    """Row gather; the gradient scatter-adds back into the table."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"take_rows expects a flat id list, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"row id out of range for table with {table.shape[0]} rows"
        )
    data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(data, (table,), backward)


# Pointwise nonlinearities --------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return _node(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    e = np.exp(-np.abs(x))
    data = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        return (g * data * (1.0 - data),)

    return _node(data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - data * data),)

    return _node(data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        return (g * data,)

    return _node(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _node(data, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / data,)

    return _node(data, (a,), backward)


# Reductions -----------------------------------------------------------------


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _node(data, (a,), backward)


def tensor_mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# Softmax family -------------------------------------------------------------


def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-shifted softmax along ``axis``.

    ``mask`` is a boolean array broadcastable to the input; True marks
    positions excluded from the distribution, which receive weight exactly
    zero. Each slice along ``axis`` must keep at least one admissible entry.
    """
    a = as_tensor(a)
    z = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, -np.inf, z)
    m = np.max(z, axis=axis, keepdims=True)
    if mask is not None and np.isneginf(m).any():
        raise ShapeError("softmax slice with every position masked")
    e = np.exp(z - m)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return ((g - inner) * data,)

    return _node(data, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def backward(g):
        return (g - np.exp(data) * g.sum(axis=axis, keepdims=True),)

    return _node(data, (a,), backward)


# Temporal convolution --------------------------------------------------------


def conv_temporal(x, kernel, bias=None) -> Tensor:
    """1-D convolution along the trailing time axis of a [C, N, T] tensor.

    ``kernel`` has shape [C_out, C, 1, w] with odd width w; zero padding of
    (w-1)/2 on both sides keeps the time extent unchanged. Each of the N
    middle slots (joints) is filtered independently. ``bias`` of shape
    [C_out], when given, is added per output channel.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3:
        raise ShapeError(f"conv_temporal input must be [C, N, T], got {x.shape}")
    if kernel.ndim != 4 or kernel.shape[2] != 1:
        raise ShapeError(
            f"conv_temporal kernel must be [C_out, C, 1, w], got {kernel.shape}"
        )
    c_out, c_in, _, w = kernel.shape
    if w % 2 == 0:
        raise ShapeError(f"conv_temporal kernel width must be odd, got {w}")
    if c_in != x.shape[0]:
        raise ShapeError(
            f"conv_temporal channel mismatch: input {x.shape} vs kernel {kernel.shape}"
        )
    _, n, t = x.shape
    pad = (w - 1) // 2
    xp = np.zeros((c_in, n, t + w - 1))
    xp[:, :, pad : pad + t] = x.data
    # Unfold taps into columns so the whole convolution is one matrix product.
    windows = np.lib.stride_tricks.sliding_window_view(xp, w, axis=2)
    cols = np.ascontiguousarray(windows.transpose(0, 3, 1, 2)).reshape(
        c_in * w, n * t
    )
    flat_kernel = kernel.data.reshape(c_out, c_in * w)
    data = (flat_kernel @ cols).reshape(c_out, n, t)

    def backward(g):
        g2 = g.reshape(c_out, n * t)
        dk = (g2 @ cols.T).reshape(kernel.shape) if kernel.requires_grad else None
        if x.requires_grad:
            dcols = (flat_kernel.T @ g2).reshape(c_in, w, n, t)
            dxp = np.zeros_like(xp)
            for tap in range(w):
                dxp[:, :, tap : tap + t] += dcols[:, tap]
            dx = dxp[:, :, pad : pad + t]
        else:
            dx = None
        return dx, dk

    out = _node(data, (x, kernel), backward)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(
                f"conv_temporal bias must be [{c_out}], got {bias.shape}"
            )
        out = add(out, reshape(bias, (c_out, 1, 1)))
    return out


def layer_norm_affine(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(
            f"layer norm scale/shift must be [{width}], got "
            f"{gain.shape} / {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    data = normed * gain.data + bias.data

    def backward(g):
        d_gain = (g * normed).reshape(-1, width).sum(axis=0) \
            if gain.requires_grad else None
        d_bias = g.reshape(-1, width).sum(axis=0) if bias.requires_grad else None
        if x.requires_grad:
            gn = g * gain.data
            mean_gn = gn.mean(axis=-1, keepdims=True)
            mean_gn_normed = (gn * normed).mean(axis=-1, keepdims=True)
            dx = inv * (gn - mean_gn - normed * mean_gn_normed)
        else:
            dx = None
        return dx, d_gain, d_bias

    return _node(data, (x, gain, bias), backward)


# Verification ----------------------------------------------------------------


def grad_check(f, params: Sequence[Parameter], eps: float = 1e-5,
               probes: int = 100, rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients of a scalar function with central differences.

    Returns the maximum over sampled coordinates of
    ``|analytic - numeric| / max(1, |analytic|)``. ``f`` must be a
    deterministic zero-argument callable that reads the given parameters.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if len(coords) > probes:
        picks = rng.choice(len(coords), size=probes, replace=False)
        coords = [coords[int(k)] for k in picks]

    worst = 0.0
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        saved = flat[j]
        flat[j] = saved + eps
        up = float(f().data)
        flat[j] = saved - eps
        down = float(f().data)
        flat[j] = saved
        numeric = (up - down) / (2.0 * eps)
        a = analytic[i].reshape(-1)[j]
        err = abs(a - numeric) / max(1.0, abs(a))
        if err > worst:
            worst = err
    return worst


def finite_assert(t: Tensor, label: str) -> Tensor:
    """Raise if a tensor picked up non-finite values; used at module seams."""
    if not np.isfinite(t.data).all():
        raise FloatingPointError(f"{label} contains non-finite values")
    return t


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)
