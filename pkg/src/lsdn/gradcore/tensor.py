"""Reverse-mode automatic differentiation over small dense float64 tensors.

The computation graph is a dynamic tape: every differentiable operation
links its output tensor to its inputs through a backward closure, and
``backward`` walks the graph once in reverse topological order.  Node
identity is the Python object identity of the Tensor.  Everything is
double precision so gradient checks against central finite differences
can be held to tight tolerances.

A graph is single-threaded; independent graphs over disjoint parameter
copies may run in parallel.  Wrap inference-only code in ``no_grad()``
to skip graph construction entirely.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "GraphError",
    "no_grad",
    "grad_enabled",
    "backward",
    "gradients",
    "concat",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "softplus",
    "square",
    "tsum",
    "tmean",
    "log_softmax",
]


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


class GraphError(ValueError):
    """Raised on invalid graph usage, e.g. backward from a non-scalar."""


_GRAD_ENABLED = [True]


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED[0]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array with an optional gradient slot on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def detach(self) -> "Tensor":
        """A view of the same values, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return _add(self, _wrap(other))

    def __radd__(self, other):
        return _add(_wrap(other), self)

    def __sub__(self, other):
        return _sub(self, _wrap(other))

    def __rsub__(self, other):
        return _sub(_wrap(other), self)

    def __mul__(self, other):
        return _mul(self, _wrap(other))

    def __rmul__(self, other):
        return _mul(_wrap(other), self)

    def __truediv__(self, other):
        return _div(self, _wrap(other))

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __neg__(self):
        return _neg(self)

    def __matmul__(self, other):
        return _matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED[0] and any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum_shaped(t: Tensor, g: np.ndarray):
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


# -- primitive ops -----------------------------------------------------------


def _add(a: Tensor, b: Tensor) -> Tensor:
    def back(out):
        g = out.grad
        _accum_shaped(a, g)
        _accum_shaped(b, g)

    return _make(a.data + b.data, (a, b), back)


def _sub(a: Tensor, b: Tensor) -> Tensor:
    def back(out):
        g = out.grad
        _accum_shaped(a, g)
        _accum_shaped(b, -g)

    return _make(a.data - b.data, (a, b), back)


def _mul(a: Tensor, b: Tensor) -> Tensor:
    def back(out):
        g = out.grad
        _accum_shaped(a, g * b.data)
        _accum_shaped(b, g * a.data)

    return _make(a.data * b.data, (a, b), back)


def _div(a: Tensor, b: Tensor) -> Tensor:
    def back(out):
        g = out.grad
        _accum_shaped(a, g / b.data)
        _accum_shaped(b, -g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), back)


def _neg(a: Tensor) -> Tensor:
    def back(out):
        _accum_shaped(a, -out.grad)

    return _make(-a.data, (a,), back)


def _matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ShapeError("matmul requires at least 1-D operands")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul mismatch: {a.data.shape} @ {b.data.shape}"
        )

    def back(out):
        g = out.grad
        if a.data.ndim == 1 and b.data.ndim == 2:
            # (k,) @ (k, n) -> (n,)
            _accum_shaped(a, g @ b.data.T)
            _accum_shaped(b, np.outer(a.data, g))
        elif a.data.ndim == 2 and b.data.ndim == 2:
            _accum_shaped(a, g @ b.data.T)
            _accum_shaped(b, a.data.T @ g)
        elif a.data.ndim == 2 and b.data.ndim == 1:
            _accum_shaped(a, np.outer(g, b.data))
            _accum_shaped(b, a.data.T @ g)
        else:
            _accum_shaped(a, np.dot(g, b.data))
            _accum_shaped(b, np.dot(a.data, g))

    return _make(a.data @ b.data, (a, b), back)


def exp(a: Tensor) -> Tensor:
    val = np.exp(a.data)

    def back(out):
        _accum_shaped(a, out.grad * val)

    return _make(val, (a,), back)


def log(a: Tensor) -> Tensor:
    def back(out):
        _accum_shaped(a, out.grad / a.data)

    return _make(np.log(a.data), (a,), back)


def tanh(a: Tensor) -> Tensor:
    val = np.tanh(a.data)

    def back(out):
        _accum_shaped(a, out.grad * (1.0 - val * val))

    return _make(val, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    # 0.5*(1+tanh(x/2)) is stable for large |x|
    val = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def back(out):
        _accum_shaped(a, out.grad * val * (1.0 - val))

    return _make(val, (a,), back)


def softplus(a: Tensor) -> Tensor:
    val = np.logaddexp(0.0, a.data)

    def back(out):
        sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        _accum_shaped(a, out.grad * sig)

    return _make(val, (a,), back)


def square(a: Tensor) -> Tensor:
    def back(out):
        _accum_shaped(a, out.grad * 2.0 * a.data)

    return _make(a.data * a.data, (a,), back)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def back(out):
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum_shaped(a, np.broadcast_to(g, a.data.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]

    def back(out):
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum_shaped(a, np.broadcast_to(g, a.data.shape) / n)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [(_wrap(t)) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    offs = np.cumsum([0] + sizes)

    def back(out):
        g = out.grad
        for t, lo, hi in zip(ts, offs[:-1], offs[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            _accum_shaped(t, g[tuple(idx)])

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    val = shifted - lse

    def back(out):
        g = out.grad
        sm = np.exp(val)
        _accum_shaped(a, g - sm * g.sum(axis=axis, keepdims=True))

    return _make(val, (a,), back)


# -- backward pass -----------------------------------------------------------


def _toposort(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Propagate gradients from a scalar loss to every reachable tensor."""
    if not isinstance(loss, Tensor):
        raise GraphError("backward expects a Tensor")
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_toposort(loss)):
        if node._backward is not None:
            node._backward(node)


def gradients(loss: Tensor, params: dict) -> dict:
    """Run backward and return {name: gradient array}.

    Parameters not reachable from the loss get an explicit zero gradient.
    """
    for p in params.values():
        p.grad = None
    backward(loss)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
