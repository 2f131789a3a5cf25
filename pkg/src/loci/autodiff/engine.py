"""Dense tensors with a define-by-run differentiation tape.

Every operation that involves a tensor requiring gradients appends a node to
the active :class:`Tape`.  Because the tape is recorded in execution order,
walking it backwards is a valid topological order, so :meth:`Tensor.backward`
visits each node exactly once.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from loci.errors import AxisError, ShapeError

_DTYPE = [np.float32]
_GRAD_ENABLED = [True]


def default_dtype():
    return _DTYPE[-1]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors (gradient checks run in float64)."""
    _DTYPE.append(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.pop()


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


class Node:
    __slots__ = ("out", "parents", "backward_fn", "name")

    def __init__(self, out, parents, backward_fn, name):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of differentiable operations.

    Tapes nest via ``with Tape():``; operations record onto the innermost one.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.remove(self)
        self.clear()

    @classmethod
    def current(cls) -> "Tape":
        return cls._stack[-1]

    def record(self, node: Node):
        self.nodes.append(node)

    def clear(self):
        """Drop every node; recorded outputs become plain constant values."""
        for node in self.nodes:
            node.out._node = None
            node.out.requires_grad = False
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


Tape._stack.append(Tape())


def _as_array(data, dtype=None):
    dtype = dtype or default_dtype()
    if isinstance(data, np.ndarray) and data.dtype == dtype:
        return data
    return np.asarray(data, dtype=dtype)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node", "name", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node: Node | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return detach(self)

    # -- differentiation --------------------------------------------------
    def backward(self, grad=None, retain_graph: bool = False):
        """Reverse-mode sweep over the active tape, accumulating into leaf ``.grad``."""
        tape = Tape.current()
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)
        if self._node is None:
            if self.requires_grad:
                self.grad = grad if self.grad is None else self.grad + grad
            return
        grads: dict[int, np.ndarray] = {id(self._node): grad}
        for node in reversed(tape.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, in_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._node is not None:
                    key = id(parent._node)
                    prev = grads.get(key)
                    grads[key] = pg if prev is None else prev + pg
                else:
                    if parent.grad is None:
                        parent.grad = np.array(pg, dtype=parent.data.dtype, copy=True)
                    else:
                        parent.grad += pg
        if not retain_graph:
            tape.clear()

    # -- operator sugar ---------------------------------------------------
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

    def __pow__(self, exponent):
        return pow(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)


def tensor(data, requires_grad=False, name=None) -> Tensor:
    return Tensor(_as_array(data), requires_grad=requires_grad, name=name)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_array(x))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, name: str) -> Tensor:
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        node = Node(out, tuple(parents), backward_fn, name)
        out._node = node
        Tape.current().record(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def pow(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(exponent, Tensor):
        raise TypeError("pow supports scalar exponents only")
    p = float(exponent)
    x = a.data
    out = np.power(x, p).astype(x.dtype, copy=False)
    return _make(out, (a,), lambda g: (g * p * np.power(x, p - 1).astype(x.dtype, copy=False),), "pow")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def maximum(a, value: float) -> Tensor:
    """Elementwise ``max(a, value)`` against a scalar; gradient flows where ``a > value``."""
    a = as_tensor(a)
    mask = a.data > value
    out = np.where(mask, a.data, np.asarray(value, dtype=a.data.dtype))
    return _make(out, (a,), lambda g: (g * mask,), "maximum")


def minimum(a, value: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data < value
    out = np.where(mask, a.data, np.asarray(value, dtype=a.data.dtype))
    return _make(out, (a,), lambda g: (g * mask,), "minimum")


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    x = a.data
    mask = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (g * mask,), "clip")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.logaddexp(0, x).astype(x.dtype, copy=False)
    sig = 1.0 / (1.0 + np.exp(-x))
    return _make(out, (a,), lambda g: (g * sig,), "softplus")


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise AxisError(f"axis {ax} out of range for tensor of rank {ndim}")
        out.append(ax % ndim)
    return tuple(sorted(out))


def sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape
    out = np.sum(a.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    shape = a.shape
    out = np.mean(a.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape),)

    return _make(np.asarray(out), (a,), backward, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swap_last(a) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input")
    ndim = ts[0].ndim
    (ax,) = _norm_axis(axis, ndim)
    for t in ts[1:]:
        if t.ndim != ndim or any(t.shape[i] != ts[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(f"concat: shapes {ts[0].shape} and {t.shape} do not conform on axis {ax}")
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for i in range(len(ts)):
            idx = [slice(None)] * ndim
            idx[ax] = slice(int(bounds[i]), int(bounds[i + 1]))
            out.append(g[tuple(idx)])
        return tuple(out)

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, backward, "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis if axis >= 0 else axis + ts[0].ndim + 1
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in ts]
    return concat(expanded, axis=ax)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.data.dtype
    out = a.data[index]
    basic = not _is_fancy(index)

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, copy=True) if basic else out, (a,), backward, "slice")


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray, Tensor)) for i in items)


def pad2d(a, pad: int) -> Tensor:
    """Zero-pad the last two axes."""
    a = as_tensor(a)
    if pad == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
    sl = (Ellipsis, slice(pad, -pad), slice(pad, -pad))
    return _make(np.pad(a.data, widths), (a,), lambda g: (g[sl],), "pad2d")


# ---------------------------------------------------------------------------
# linear algebra and normalisation
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not conform") from None

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward, "matmul")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    (ax,) = _norm_axis(axis, a.ndim)
    x = a.data - a.data.max(axis=ax, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=ax, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return _make(out, (a,), backward, "softmax")


def layer_norm(x, weight, bias, eps: float = 1e-5) -> Tensor:
    mu = mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return centered / sqrt(var + eps) * weight + bias


# ---------------------------------------------------------------------------
# stochastic and gradient-shaping ops
# ---------------------------------------------------------------------------

def add_noise(a, rng: np.random.Generator, std=1.0) -> Tensor:
    """``a + std * N(0, 1)``; the noise is treated as a constant (identity backward).

    ``std`` may be a scalar or an array broadcastable to ``a``.
    """
    a = as_tensor(a)
    std = std.data if isinstance(std, Tensor) else std
    noise = rng.standard_normal(a.shape).astype(a.data.dtype) * np.asarray(std, dtype=a.data.dtype)
    return _make(a.data + noise, (a,), lambda g: (g,), "noise")


def detach(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean mask."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(np.where(cond, g, 0), sa), _unbroadcast(np.where(cond, 0, g), sb)

    return _make(np.where(cond, a.data, b.data), (a, b), backward, "where")
