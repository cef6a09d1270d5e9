"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable op records a vector-Jacobian product (VJP) written in
terms of other Tensor ops.  Under ``grad(..., create_graph=True)`` the
backward pass is itself recorded, which is what the gradient penalties need
to differentiate an input-gradient norm with respect to parameters.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class _Mode(threading.local):
    def __init__(self) -> None:
        self.grad_enabled = True
        self.debug = False


_mode = _Mode()


@contextlib.contextmanager
def no_grad():
    prev = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = prev


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    prev = _mode.grad_enabled
    _mode.grad_enabled = enabled
    try:
        yield
    finally:
        _mode.grad_enabled = prev


@contextlib.contextmanager
def debug_checks(enabled: bool = True):
    """Raise NonFiniteError as soon as any op produces NaN or Inf."""
    prev = _mode.debug
    _mode.debug = enabled
    try:
        yield
    finally:
        _mode.debug = prev


def is_grad_enabled() -> bool:
    return _mode.grad_enabled


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value produced by {op}")


VJP = Callable[["Tensor", tuple], tuple]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Tensor | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: VJP | None = None
        self._op = "leaf"
        if _mode.debug:
            _check_finite(arr, "tensor construction")

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple, vjp: VJP, op: str) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._op = op
        if _mode.debug:
            _check_finite(data, op)
        if _mode.grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # -- array protocol ------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
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
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operators -------------------------------------------------------------
    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __truediv__(self, other):
        return div(self, self._lift(other))

    def __rtruediv__(self, other):
        return div(self._lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _float_mask(cond: np.ndarray, dtype) -> Tensor:
    return Tensor(cond.astype(dtype))


# -- broadcasting support -----------------------------------------------------

def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    return g


# -- elementwise binary ---------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)
    return Tensor._result(a.data + b.data, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(neg(g), b.shape) if needs[1] else None)
    return Tensor._result(a.data - b.data, (a, b), vjp, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (_unbroadcast(g * b, a.shape) if needs[0] else None,
                _unbroadcast(g * a, b.shape) if needs[1] else None)
    return Tensor._result(a.data * b.data, (a, b), vjp, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (_unbroadcast(g / b, a.shape) if needs[0] else None,
                _unbroadcast(neg(g * a / (b * b)), b.shape) if needs[1] else None)
    return Tensor._result(a.data / b.data, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, (a,), lambda g, needs: (neg(g),), "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")

    def vjp(g, needs):
        return (matmul(g, transpose(b)) if needs[0] else None,
                matmul(transpose(a), g) if needs[1] else None)
    return Tensor._result(_mm(a.data, b.data), (a, b), vjp, "matmul")


def _mm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # OpenBLAS is ~20x slower than a broadcast product for rank-1 outer products
    if x.shape[1] == 1:
        return x * y
    return x @ y


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused ``x @ w + b`` for a (batch, in) input and (out,) bias."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear shapes {x.shape} @ {w.shape} + {b.shape}")
    out = _mm(x.data, w.data)
    out += b.data

    def vjp(g, needs):
        return (matmul(g, transpose(w)) if needs[0] else None,
                matmul(transpose(x), g) if needs[1] else None,
                tsum(g, axis=0) if needs[2] else None)
    return Tensor._result(out, (x, w, b), vjp, "linear")


# -- shape ops --------------------------------------------------------------

def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return Tensor._result(a.data.T, (a,), lambda g, needs: (transpose(g),), "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return Tensor._result(a.data.reshape(shape), (a,),
                          lambda g, needs: (reshape(g, src),), "reshape")


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return Tensor._result(np.broadcast_to(a.data, shape), (a,),
                          lambda g, needs: (_unbroadcast(g, a.shape),), "broadcast_to")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if isinstance(axis, int):
        axis = (axis,)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g, needs):
        if not keepdims and axis is not None:
            kept = tuple(1 if i in {ax % a.ndim for ax in axis} else n
                         for i, n in enumerate(a.shape))
            g = reshape(g, kept)
        elif not keepdims:
            g = reshape(g, (1,) * a.ndim)
        return (broadcast_to(g, a.shape),)
    return Tensor._result(np.asarray(data), (a,), vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def getitem(a: Tensor, index) -> Tensor:
    def vjp(g, needs):
        return (_scatter(g, index, a.shape),)
    return Tensor._result(a.data[index], (a,), vjp, "getitem")


def _scatter(g: Tensor, index, shape: tuple[int, ...]) -> Tensor:
    data = np.zeros(shape, dtype=g.dtype)
    # add.at so that repeated fancy indices accumulate
    np.add.at(data, index, g.data)
    return Tensor._result(data, (g,), lambda gg, needs: (getitem(gg, index),), "scatter")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    ndim = tensors[0].ndim
    ax = axis % ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g, needs):
        out = []
        for i, need in enumerate(needs):
            if not need:
                out.append(None)
                continue
            index = [slice(None)] * ndim
            index[ax] = slice(int(bounds[i]), int(bounds[i + 1]))
            out.append(getitem(g, tuple(index)))
        return tuple(out)
    data = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor._result(data, tensors, vjp, "concat")


# -- elementwise unary --------------------------------------------------------

def exp(a: Tensor) -> Tensor:
    out = Tensor._result(np.exp(a.data), (a,), lambda g, needs: (g * out,), "exp")
    return out


def log(a: Tensor) -> Tensor:
    return Tensor._result(np.log(a.data), (a,), lambda g, needs: (g / a,), "log")


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def vjp(g, needs):
        # subgradient 0 at the origin instead of inf
        mask = _float_mask(data > 0, data.dtype)
        return (g * mask * 0.5 / (out + (1.0 - mask)),)
    out = Tensor._result(data, (a,), vjp, "sqrt")
    return out


def square(a: Tensor) -> Tensor:
    return Tensor._result(a.data * a.data, (a,), lambda g, needs: (g * a * 2.0,), "square")


def power(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    if p == 2.0:
        return square(a)
    return Tensor._result(a.data ** p, (a,),
                          lambda g, needs: (g * power(a, p - 1.0) * p,), "power")


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor._result(expit(a.data), (a,),
                         lambda g, needs: (g * out * (1.0 - out),), "sigmoid")
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor._result(np.tanh(a.data), (a,),
                         lambda g, needs: (g * (1.0 - out * out),), "tanh")
    return out


def relu(a: Tensor) -> Tensor:
    def vjp(g, needs):
        return (g * _float_mask(a.data > 0, a.dtype),)
    return Tensor._result(np.maximum(a.data, 0), (a,), vjp, "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError("leaky_relu slope must lie in [0, 1)")
    x = a.data

    def vjp(g, needs):
        slopes = (x > 0).astype(x.dtype)
        slopes *= 1.0 - slope
        slopes += slope
        return (g * Tensor(slopes),)
    return Tensor._result(np.maximum(x, slope * x), (a,), vjp, "leaky_relu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    def vjp(g, needs):
        return (g * _float_mask((a.data >= lo) & (a.data <= hi), a.dtype),)
    return Tensor._result(np.clip(a.data, lo, hi), (a,), vjp, "clip")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    z = a - shift
    return z - log(tsum(exp(z), axis=axis, keepdims=True))


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "linear": lambda t: t,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


# -- backward engine ---------------------------------------------------------

def _toposort(roots: Iterable[Tensor]) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    for root in roots:
        if id(root) in seen or not root.requires_grad:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def grad(outputs, inputs: Sequence[Tensor], grad_outputs=None,
         create_graph: bool = False) -> list[Tensor]:
    """Gradients of ``outputs`` with respect to ``inputs``.

    Inputs that the outputs do not depend on get a zero gradient.  Only the
    part of the graph that leads to ``inputs`` is traversed.
    """
    outputs = [outputs] if isinstance(outputs, Tensor) else list(outputs)
    if grad_outputs is None:
        for out in outputs:
            if out.size != 1:
                raise ShapeError(f"grad of a non-scalar output of shape {out.shape} "
                                 "needs grad_outputs")
        grad_outputs = [Tensor(np.ones_like(out.data)) for out in outputs]
    else:
        grad_outputs = [as_tensor(g) for g in (
            [grad_outputs] if isinstance(grad_outputs, Tensor) else grad_outputs)]

    topo = _toposort(outputs)
    wanted = {id(t) for t in inputs}
    reaches = set(wanted)
    for node in topo:
        if any(id(p) in reaches for p in node._parents):
            reaches.add(id(node))

    grads: dict[int, Tensor] = {}
    with _grad_mode(create_graph):
        for out, g in zip(outputs, grad_outputs):
            if out.requires_grad:
                grads[id(out)] = grads[id(out)] + g if id(out) in grads else g
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None or node._vjp is None or id(node) not in reaches:
                continue
            needs = tuple(p.requires_grad and id(p) in reaches for p in node._parents)
            if not any(needs):
                continue
            for p, pg in zip(node._parents, node._vjp(g, needs)):
                if pg is None:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
            if id(node) not in wanted:
                del grads[id(node)]
    result = []
    for t in inputs:
        g = grads.get(id(t))
        result.append(Tensor(np.zeros_like(t.data)) if g is None else g)
    return result


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> list[Tensor]:
    """Accumulate d(loss)/d(param) into ``param.grad`` for every leaf that needs it."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params is None:
        params = [n for n in _toposort([loss]) if n._vjp is None and n.requires_grad]
    params = [p for p in params if p.requires_grad]
    grads = grad(loss, params)
    for p, g in zip(params, grads):
        p.grad = g if p.grad is None else Tensor(p.grad.data + g.data)
    return grads
