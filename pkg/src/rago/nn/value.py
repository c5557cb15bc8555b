"""Reverse-mode automatic differentiation over numpy arrays.

Every :class:`Value` records the op that produced it. ``backward`` visits
the recorded ops once each, in reverse creation order, which is a valid
reverse topological order because an op's output is always created after
its inputs.
"""

import itertools

import numpy as np
from scipy import sparse

from ..errors import ShapeMismatch

_ids = itertools.count()


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Value:
    """An array with an optional gradient and the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._id = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Value(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if node._id in seen or not node.requires_grad:
                continue
            seen.add(node._id)
            nodes.append(node)
            stack.extend(node._parents)
        nodes.sort(key=lambda n: n._id, reverse=True)
        self._accumulate(grad)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior gradients are not needed after propagation
                    node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return swapaxes(self)


def as_value(x):
    return x if isinstance(x, Value) else Value(x)


def parameter(data):
    return Value(data, requires_grad=True)


def _make(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Value(data, True, parents, backward)
    return Value(data)


def add(a, b):
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_value(a), as_value(b)
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), backward)


def matmul(a, b):
    """Matrix product; leading axes broadcast as in ``numpy.matmul``."""
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), backward)


def tanh(x):
    x = as_value(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: x._accumulate(g * (1.0 - out * out)))


def sigmoid(x):
    x = as_value(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: x._accumulate(g * out * (1.0 - out)))


def relu(x):
    x = as_value(x)
    out = np.maximum(x.data, 0.0)
    return _make(out, (x,), lambda g: x._accumulate(g * (out > 0)))


def absolute(x):
    """Elementwise |x| with subgradient 0 at 0."""
    x = as_value(x)
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: x._accumulate(g * sign))


def sqrt(x):
    x = as_value(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: x._accumulate(g * 0.5 / out))


def sum(x, axis=None, keepdims=False):  # noqa: A001
    x = as_value(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(out, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_value(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_value(x)
    return _make(x.data.reshape(shape), (x,), lambda g: x._accumulate(g.reshape(x.shape)))


def swapaxes(x, a1=-1, a2=-2):
    x = as_value(x)
    return _make(np.swapaxes(x.data, a1, a2), (x,), lambda g: x._accumulate(np.swapaxes(g, a1, a2)))


def getitem(x, index):
    x = as_value(x)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        x._accumulate(full)

    return _make(x.data[index], (x,), backward)


def _segment_matrix(index, n):
    """CSR matrix summing rows of a ``(len(index), ...)`` array into ``n`` segments.

    Within a segment, rows are summed in ascending row order.
    """
    m = len(index)
    return sparse.csr_matrix((np.ones(m), (index, np.arange(m))), shape=(n, m))


def _segment_sum(mat, values):
    flat = values.reshape(values.shape[0], -1)
    return np.asarray(mat @ flat).reshape((mat.shape[0],) + values.shape[1:])


def gather(x, idx):
    """Rows ``x[idx]`` along the first axis."""
    idx = np.asarray(idx, dtype=np.int64)
    x = as_value(x)
    if idx.size and (idx.min() < 0 or idx.max() >= len(x.data)):
        raise ShapeMismatch("gather index out of range")

    def backward(g):
        x._accumulate(_segment_sum(_segment_matrix(idx, len(x.data)), g))

    return _make(x.data[idx], (x,), backward)


def scatter_mean(values, target, n):
    """Per-target mean of rows: ``out[i] = mean(values[target == i])``.

    Targets with no rows get zeros. Rows are summed in ascending row order.
    """
    values = as_value(values)
    target = np.asarray(target, dtype=np.int64)
    if len(target) != len(values.data):
        raise ShapeMismatch(f"{len(target)} targets for {len(values.data)} rows")
    count = np.bincount(target, minlength=n).astype(float)
    safe = np.maximum(count, 1.0)
    total = _segment_sum(_segment_matrix(target, n), values.data)
    scale = (1.0 / safe).reshape((n,) + (1,) * (values.ndim - 1))
    out = total * scale

    def backward(g):
        values._accumulate((g * scale)[target])

    return _make(out, (values,), backward)


def concat(values, axis=-1):
    values = [as_value(v) for v in values]
    try:
        out = np.concatenate([v.data for v in values], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for v, part in zip(values, np.split(g, splits, axis=axis)):
            if v.requires_grad:
                v._accumulate(part)

    return _make(out, tuple(values), backward)


def stack(values, axis=0):
    values = [as_value(v) for v in values]
    try:
        out = np.stack([v.data for v in values], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None

    def backward(g):
        for i, v in enumerate(values):
            if v.requires_grad:
                v._accumulate(np.take(g, i, axis=axis))

    return _make(out, tuple(values), backward)


def cross(a, b):
    """Cross product along the last axis (length 3)."""
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.cross(b.data, g), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.cross(g, a.data), b.shape))

    return _make(np.cross(a.data, b.data), (a, b), backward)


def l1_loss(a, b):
    """Mean over the leading axis of the per-row entrywise L1 norm of ``a - b``."""
    a, b = as_value(a), as_value(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"l1_loss of {a.shape} and {b.shape}")
    return mul(sum(absolute(sub(a, b))), 1.0 / a.shape[0])
