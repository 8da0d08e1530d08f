"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a row-major ``numpy`` array and, when it takes part in
a differentiable computation, a reference to the operation that produced it.
Calling :meth:`Tensor.backward` on a scalar walks the recorded operations in
exact reverse creation order and accumulates gradients into every reachable
tensor that requires them.

The op set is deliberately small: what is needed for MLP hypernetworks,
per-sample (batched) linear layers and the log-sum-exp predictive loss.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericError, ShapeError

_creation = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation only)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """Dense float64 array with an optional differentiation record.

    ``grad`` stays ``None`` until a backward pass reaches the tensor; repeated
    backward passes accumulate into it until :meth:`zero_grad` is called.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_id")
    __array_ufunc__ = None  # make numpy operands defer to Tensor's reflected operators

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._id = next(_creation)

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str, backward: Callable) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        out._id = next(_creation)
        live = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = live
        out._parents = tuple(parents) if live else ()
        out._backward = backward if live else None
        return out

    # -- introspection -----------------------------------------------------
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    # -- operators ---------------------------------------------------------
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        if self.ndim == 2 and _as_tensor(other).ndim == 2:
            return matmul(self, other)
        return batched_matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return reduce("sum", self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce("mean", self, axis, keepdims)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absolute(self)

    def square(self):
        return square(self)

    def tanh(self):
        return tanh(self)

    # -- reverse pass ------------------------------------------------------
    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The recorded graph is released afterwards; a second call on the same
        loss only re-seeds the loss itself.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            self.grad = np.ones_like(self.data) if self.grad is None else self.grad + 1.0
            return
        nodes = _reachable(self)
        pending = {id(self): np.ones_like(self.data)}
        owned: set[int] = set()  # pending buffers allocated here, safe to update in place
        for node in sorted(nodes, key=lambda t: t._id, reverse=True):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if isinstance(pg, _Partial):
                    if key not in pending:
                        pending[key] = np.zeros(parent.shape)
                    elif key not in owned:
                        pending[key] = pending[key].copy()
                    owned.add(key)
                    pending[key][pg.index] += pg.value
                elif key in pending:
                    pending[key] = pending[key] + pg
                    owned.add(key)
                else:
                    pending[key] = pg
        for node in nodes:
            node._parents = ()
            node._backward = None


def _reachable(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    stack = [root]
    out = []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(p for p in node._parents if p.requires_grad)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")
    return Tensor._from_op(
        a.data + b.data, (a, b), "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return Tensor._from_op(
        a.data - b.data, (a, b), "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return Tensor._from_op(
        a.data * b.data, (a, b), "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(-a.data, (a,), "neg", lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return Tensor._from_op(c * a.data, (a,), "scale", lambda g: (c * g,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return Tensor._from_op(np.abs(a.data), (a,), "abs", lambda g: (g * np.sign(a.data),))


def square(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(a.data * a.data, (a,), "square", lambda g: (2.0 * a.data * g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), "exp", lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(~(a.data > 0)):
        raise DomainError("log requires strictly positive inputs")
    return Tensor._from_op(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._from_op(out, (a,), "tanh", lambda g: (g * (1.0 - out * out),))


_ELEMENTWISE = {
    "relu": relu,
    "abs": absolute,
    "square": square,
    "exp": exp,
    "log": log,
    "neg": neg,
    "tanh": tanh,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name, e.g. ``elementwise("scale", t, 0.5)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*args)


# -- reductions -----------------------------------------------------------
def _check_axis(t: Tensor, axis) -> tuple[int, ...] | None:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    norm = []
    for ax in axes:
        if not -t.ndim <= ax < t.ndim:
            raise ShapeError(f"axis {ax} is out of range for shape {t.shape}")
        norm.append(ax % t.ndim)
    return tuple(norm)


def reduce(op: str, t, axis=None, keepdims: bool = False) -> Tensor:
    """``sum`` or ``mean`` over ``axis`` (all axes when ``None``)."""
    t = _as_tensor(t)
    axes = _check_axis(t, axis)
    if op == "sum":
        factor = 1.0
    elif op == "mean":
        count = t.size if axes is None else int(np.prod([t.shape[a] for a in axes]))
        factor = 1.0 / count
    else:
        raise ValueError(f"unknown reduction {op!r}")
    data = t.data.sum(axis=axes, keepdims=keepdims)
    if factor != 1.0:
        data = data * factor
    shape = t.shape

    def backward(g):
        if not keepdims and axes is not None:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g * factor, shape).copy(),)

    return Tensor._from_op(np.asarray(data, dtype=np.float64), (t,), op, backward)


def logsumexp(t, axis=-1, keepdims: bool = False) -> Tensor:
    """``log(sum(exp(t)))`` along ``axis`` using the max-shift."""
    t = _as_tensor(t)
    (ax,) = _check_axis(t, axis)
    if np.isnan(t.data).any() or np.isposinf(t.data).any():
        raise NumericError("logsumexp received NaN or +inf input")
    peak = t.data.max(axis=ax, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out_keep = peak + np.log(np.exp(t.data - peak).sum(axis=ax, keepdims=True))

    def backward(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        with np.errstate(invalid="ignore"):
            weights = np.exp(t.data - out_keep)
        return (np.nan_to_num(weights) * gk,)

    data = out_keep if keepdims else np.squeeze(out_keep, axis=ax)
    return Tensor._from_op(data, (t,), "logsumexp", backward)


# -- linear algebra -------------------------------------------------------
def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a, b) -> Tensor:
    """Plain 2-D matrix product."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return Tensor._from_op(
        np.matmul(a.data, b.data), (a, b), "matmul",
        lambda g: (np.matmul(g, b.data.T), np.matmul(a.data.T, g)),
    )


def batched_matmul(w, v) -> Tensor:
    """Independent matrix products over leading batch extents.

    ``w`` is ``(..., m, k)`` and ``v`` is ``(..., k, n)``. Leading extents must
    match or be 1. Each slice goes through the same kernel as :func:`matmul`,
    so the result equals a loop of per-slice products bit for bit.
    """
    w, v = _as_tensor(w), _as_tensor(v)
    if w.ndim < 3 and v.ndim < 3:
        raise ShapeError(f"batched_matmul: expected a batch extent, got {w.shape} and {v.shape}")
    if w.ndim < 2 or v.ndim < 2 or w.shape[-1] != v.shape[-2]:
        raise ShapeError(f"batched_matmul: incompatible shapes {w.shape} and {v.shape}")
    lead_w, lead_v = w.shape[:-2], v.shape[:-2]
    n = max(len(lead_w), len(lead_v))
    pw = (1,) * (n - len(lead_w)) + lead_w
    pv = (1,) * (n - len(lead_v)) + lead_v
    if any(x != y and x != 1 and y != 1 for x, y in zip(pw, pv)):
        raise ShapeError(f"batched_matmul: batch extents differ, {w.shape} vs {v.shape}")
    return Tensor._from_op(
        np.matmul(w.data, v.data), (w, v), "batched_matmul",
        lambda g: (
            _unbroadcast(np.matmul(g, _swap(v.data)), w.shape),
            _unbroadcast(np.matmul(_swap(w.data), g), v.shape),
        ),
    )


# -- shape manipulation ---------------------------------------------------
def reshape(t, shape) -> Tensor:
    t = _as_tensor(t)
    try:
        data = t.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {t.shape} into {tuple(shape)}") from None
    orig = t.shape
    return Tensor._from_op(data, (t,), "reshape", lambda g: (g.reshape(orig),))


def transpose(t) -> Tensor:
    """Swap the last two axes."""
    t = _as_tensor(t)
    if t.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 axes, got shape {t.shape}")
    return Tensor._from_op(_swap(t.data).copy(), (t,), "transpose", lambda g: (_swap(g),))


class _Partial:
    """Gradient that is nonzero only on ``index`` (a basic-indexing key)."""

    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in items)


def getitem(t, index) -> Tensor:
    t = _as_tensor(t)
    shape = t.shape
    basic = _is_basic(index)

    def backward(g):
        if basic:
            return (_Partial(index, g),)
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(np.array(t.data[index]), (t,), "getitem", backward)


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}; shapes {[t.shape for t in ts]}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return Tensor._from_op(data, ts, "concat", lambda g: tuple(np.split(g, bounds, axis=axis)))


def broadcast_to(t, shape) -> Tensor:
    t = _as_tensor(t)
    try:
        data = np.broadcast_to(t.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {t.shape} to {tuple(shape)}") from None
    orig = t.shape
    return Tensor._from_op(data, (t,), "broadcast_to", lambda g: (_unbroadcast(g, orig),))
