"""Dense float64 tensors with reverse-mode automatic differentiation.

Ops record their inputs in a graph; ``Tensor.backward()`` walks the graph
once in reverse topological order and accumulates gradients additively into
every reachable tensor with ``requires_grad``. Storage is row-major numpy
float64, value-semantic (no views or strides are ever shared between
tensors). Every forward output and every backward contribution is checked
finite; NaN/Inf raises :class:`NumericError`.

Graph construction and backward are single-threaded; a graph is freed as it
is consumed, so ``backward`` can run at most once per loss.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

LAYER_NORM_EPS = 1e-5
BCE_EPS = 1e-7


class ShapeError(ValueError):
    """Operand shapes do not conform to an operator's contract."""


class NumericError(ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    # cheap screen first (NaN/Inf propagate through the sum), exact confirm
    # second (a finite array can overflow the screening sum)
    if not np.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {op}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the autodiff graph holding a dense float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _check_finite(np.asarray(data, dtype=np.float64), "tensor")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph walk ---------------------------------------------------------

    def backward(self) -> None:
        """Populate gradients of every reachable ``requires_grad`` tensor.

        Requires a scalar tensor. Gradients accumulate additively into
        ``.grad``; the traversed graph is freed afterwards and cannot be
        backpropagated again.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward() called on an already-consumed graph")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any requires_grad tensor")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is not None:
                # adjoint is complete once the node is reached in reverse order
                _check_finite(node.grad, f"backward of {node._op}")
            if node._backward is not None:
                if node.grad is not None:
                    node._backward(node.grad)
                # free the op node: data stays, graph does not
                node.grad = None
                node._parents = ()
                node._backward = None
                node._consumed = True

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the operator set")
        return mul(self, Tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def softmax(self, axis: int = -1):
        return softmax(self, axis)

    def layer_norm(self, axis: int = -1):
        return layer_norm(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _check_finite(np.asarray(data, dtype=np.float64), op)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._op = op
    out._consumed = False
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray, op: str) -> None:
    # finiteness of completed adjoints is checked centrally in backward()
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


# -- elementwise and structural ops ------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape), "add")
        _accum(b, _unbroadcast(g, b.shape), "add")

    return _make(data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape), "mul")
        _accum(b, _unbroadcast(g * a.data, b.shape), "mul")

    return _make(data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, -g, "neg")

    return _make(-a.data, (a,), backward, "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape), "matmul")
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape), "matmul")

    return _make(data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` fused into one graph node."""
    if weight.ndim != 2:
        raise ShapeError(f"linear weight must be 2-d, got {weight.shape}")
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight fan-in {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear bias shape {bias.shape} != ({weight.shape[1]},)")
    fan_in, fan_out = weight.shape
    lead = x.shape[:-1]
    # one 2-d gemm instead of numpy's per-matrix batched loop
    x2 = x.data.reshape(-1, fan_in)
    data = x2 @ weight.data
    if bias is not None:
        data = data + bias.data
    data = data.reshape(*lead, fan_out)

    def backward(g):
        g2 = g.reshape(-1, fan_out)
        _accum(x, (g2 @ weight.data.T).reshape(x.shape), "linear")
        _accum(weight, x2.T @ g2, "linear")
        if bias is not None:
            _accum(bias, g2.sum(axis=0), "linear")

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(data, parents, backward, "linear")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    tensors = tuple(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    ax = axis % data.ndim

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = tuple(slice(None) if d != ax else slice(start, stop) for d in range(g.ndim))
            _accum(t, g[index], "concat")

    return _make(data, tensors, backward, "concat")


def split(t: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    ax = axis % t.ndim
    if sum(sizes) != t.shape[ax]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis {axis} of {t.shape}")
    outs: list[Tensor] = []
    start = 0
    for size in sizes:
        stop = start + size
        index = tuple(slice(None) if d != ax else slice(start, stop) for d in range(t.ndim))

        def backward(g, index=index):
            full = np.zeros_like(t.data)
            full[index] = g
            _accum(t, full, "split")

        outs.append(_make(t.data[index].copy(), (t,), backward, "split"))
        start = stop
    return outs


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        data = t.data.reshape(shape).copy()
    except ValueError as exc:
        raise ShapeError(f"reshape {t.shape} -> {shape}") from exc

    def backward(g):
        _accum(t, g.reshape(t.shape), "reshape")

    return _make(data, (t,), backward, "reshape")


def transpose(t: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def backward(g):
        _accum(t, g.transpose(inverse), "transpose")

    return _make(t.data.transpose(axes).copy(), (t,), backward, "transpose")


def expand(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Broadcast ``t`` to ``shape``, materializing the copy."""
    try:
        data = np.broadcast_to(t.data, shape).copy()
    except ValueError as exc:
        raise ShapeError(f"expand {t.shape} -> {shape}") from exc

    def backward(g):
        _accum(t, _unbroadcast(g, t.shape), "expand")

    return _make(data, (t,), backward, "expand")


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def backward(g):
        _accum(t, g * mask, "relu")

    return _make(np.where(mask, t.data, 0.0), (t,), backward, "relu")


def sigmoid(t: Tensor) -> Tensor:
    # overflow-free: exp of a non-positive argument only
    z = np.exp(-np.abs(t.data))
    y = np.where(t.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        _accum(t, g * y * (1.0 - y), "sigmoid")

    return _make(y, (t,), backward, "sigmoid")


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accum(t, y * (g - inner), "softmax")

    return _make(y, (t,), backward, "softmax")


def layer_norm(t: Tensor, axis: int = -1) -> Tensor:
    """Zero-mean unit-variance normalization along ``axis`` (no affine)."""
    mu = t.data.mean(axis=axis, keepdims=True)
    var = t.data.var(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    y = (t.data - mu) * inv_std

    def backward(g):
        g_mean = g.mean(axis=axis, keepdims=True)
        gy_mean = (g * y).mean(axis=axis, keepdims=True)
        _accum(t, inv_std * (g - g_mean - y * gy_mean), "layer_norm")

    return _make(y, (t,), backward, "layer_norm")


def _reduction_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def mean(t: Tensor, axis=None) -> Tensor:
    axes = _reduction_axes(axis, t.ndim)
    count = int(np.prod([t.shape[a] for a in axes])) if axes else 1
    data = t.data.mean(axis=axes) if axes else t.data.copy()

    def backward(g):
        expanded = np.expand_dims(g, axes) if axes else g
        _accum(t, np.broadcast_to(expanded / count, t.shape), "mean")

    return _make(data, (t,), backward, "mean")


def tsum(t: Tensor, axis=None) -> Tensor:
    axes = _reduction_axes(axis, t.ndim)
    data = t.data.sum(axis=axes) if axes else t.data.copy()

    def backward(g):
        expanded = np.expand_dims(g, axes) if axes else g
        _accum(t, np.broadcast_to(expanded, t.shape).copy(), "sum")

    return _make(data, (t,), backward, "sum")


# -- losses -------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Per-sample ``-log softmax(logits)[label]``.

    ``logits`` has class scores along the last axis; ``labels`` holds integer
    class indices with the leading shape of ``logits``. Returns one loss per
    sample (scalar for 1-d logits).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[-1]
    if n_classes < 2:
        raise ShapeError("cross_entropy needs at least 2 classes")
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} != logit batch shape {logits.shape[:-1]}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"label out of range [0, {n_classes})")

    m = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1)) + m[..., 0]
    picked = np.take_along_axis(logits.data, labels[..., None], axis=-1)[..., 0]
    data = lse - picked

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
        _accum(logits, (p - onehot) * g[..., None], "cross_entropy")

    return _make(data, (logits,), backward, "cross_entropy")


def binary_cross_entropy(pred: Tensor, target) -> Tensor:
    """Elementwise ``-(t*ln p + (1-t)*ln(1-p))`` with predictions clamped to
    ``[BCE_EPS, 1 - BCE_EPS]`` before the logs."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"bce target shape {target.shape} != pred shape {pred.shape}")
    if target.size and (target.min() < 0.0 or target.max() > 1.0):
        raise ValueError("bce target outside [0, 1]")
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    data = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))

    def backward(g):
        _accum(pred, g * (p - target) / (p * (1.0 - p)), "binary_cross_entropy")

    return _make(data, (pred,), backward, "binary_cross_entropy")
