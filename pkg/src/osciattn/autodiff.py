"""Reverse-mode automatic differentiation on a recorded tape.

``Var`` wraps a float64 numpy array (scalars are 0-d arrays) and records the
primitive operation that produced it.  The recorded graph is the tape:
replaying it reproduces the forward values bit-exactly, and walking it in
reverse accumulates gradients.  The primitive set is deliberately small —
add, mul, div, power, exp, log, sin, cos, sinh, cosh, sqrt, plus the
structural ops (sum, matmul, where, maximum, reshape, slicing) needed to
batch them — so the closed-form kernels can run unchanged on floats, numpy
arrays, or ``Var`` values.
"""

from __future__ import annotations

import numpy as np


class PoisonedGradientError(ArithmeticError):
    """The forward value is NaN; gradients would be meaningless."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Var:
    """A node on the tape: value, parents, and the op that made it."""

    __slots__ = ("data", "grad", "_parents", "_op", "_meta", "_backward")

    # Make numpy defer to the reflected operators instead of trying to
    # coerce a Var elementwise into an object array.
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data, parents=(), op="leaf", meta=None):
        self.data = _asarray(data)
        self.grad = None
        self._parents = parents
        self._op = op
        self._meta = meta or {}
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(op={self._op!r}, shape={self.data.shape})"

    # -- binary arithmetic -------------------------------------------------

    def _coerce(self, other) -> "Var":
        return other if isinstance(other, Var) else Var(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = Var(self.data + other.data, (self, other), "add")

        def backward(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape))

        out._backward = backward
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        out = Var(self.data - other.data, (self, other), "sub")

        def backward(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape))

        out._backward = backward
        return out

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = Var(self.data * other.data, (self, other), "mul")

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            )

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Var(self.data / other.data, (self, other), "div")

        def backward(g):
            return (
                _unbroadcast(g / other.data, self.data.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
            )

        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        out = Var(-self.data, (self,), "neg")
        out._backward = lambda g: (-g,)
        return out

    def __pow__(self, exponent):
        e = float(exponent)
        out = Var(self.data**e, (self,), "pow", {"exponent": e})
        out._backward = lambda g: (g * e * self.data ** (e - 1.0),)
        return out

    # -- elementwise transcendental primitives ------------------------------

    def exp(self):
        out = Var(np.exp(self.data), (self,), "exp")
        out._backward = lambda g: (g * out.data,)
        return out

    def log(self):
        out = Var(np.log(self.data), (self,), "log")
        out._backward = lambda g: (g / self.data,)
        return out

    def sin(self):
        out = Var(np.sin(self.data), (self,), "sin")
        out._backward = lambda g: (g * np.cos(self.data),)
        return out

    def cos(self):
        out = Var(np.cos(self.data), (self,), "cos")
        out._backward = lambda g: (-g * np.sin(self.data),)
        return out

    def sinh(self):
        out = Var(np.sinh(self.data), (self,), "sinh")
        out._backward = lambda g: (g * np.cosh(self.data),)
        return out

    def cosh(self):
        out = Var(np.cosh(self.data), (self,), "cosh")
        out._backward = lambda g: (g * np.sinh(self.data),)
        return out

    def sqrt(self):
        out = Var(np.sqrt(self.data), (self,), "sqrt")
        out._backward = lambda g: (g * 0.5 / out.data,)
        return out

    def tanh(self):
        out = Var(np.tanh(self.data), (self,), "tanh")
        out._backward = lambda g: (g * (1.0 - out.data * out.data),)
        return out

    def abs(self):
        out = Var(np.abs(self.data), (self,), "abs")
        out._backward = lambda g: (g * np.sign(self.data),)
        return out

    # -- structural ops ------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Var(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum",
                  {"axis": axis, "keepdims": keepdims})

        def backward(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % self.data.ndim for a in axes):
                    g = np.expand_dims(g, ax)
            return (np.broadcast_to(g, self.data.shape).copy(),)

        out._backward = backward
        return out

    def __matmul__(self, other):
        other = self._coerce(other)
        out = Var(self.data @ other.data, (self, other), "matmul")

        def backward(g):
            a, b = self.data, other.data
            if a.ndim == 1 and b.ndim == 1:
                return (g * b, g * a)
            if b.ndim == 1:
                ge = np.expand_dims(g, -1)
                return (_unbroadcast(ge * b, a.shape), _unbroadcast(ge * a, b.shape))
            if a.ndim == 1:
                ge = np.expand_dims(g, -2)
                ga = (ge * b).sum(axis=-1)
                gb = np.expand_dims(a, -1) * ge
                return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

        out._backward = backward
        return out

    def __rmatmul__(self, other):
        return self._coerce(other).__matmul__(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        out = Var(self.data.reshape(shape), (self,), "reshape", {"shape": shape})
        out._backward = lambda g: (g.reshape(self.data.shape),)
        return out

    def swapaxes(self, a, b):
        out = Var(np.swapaxes(self.data, a, b), (self,), "swapaxes", {"a": a, "b": b})
        out._backward = lambda g: (np.swapaxes(g, a, b),)
        return out

    def __getitem__(self, idx):
        out = Var(self.data[idx], (self,), "getitem", {"idx": idx})

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return (full,)

        out._backward = backward
        return out

    # -- selection -----------------------------------------------------------

    def maximum(self, other):
        other = self._coerce(other)
        out = Var(np.maximum(self.data, other.data), (self, other), "maximum")

        def backward(g):
            mask = self.data >= other.data
            return (
                _unbroadcast(g * mask, self.data.shape),
                _unbroadcast(g * ~mask, other.data.shape),
            )

        out._backward = backward
        return out


def where(cond, a, b):
    """Select ``a`` where ``cond`` else ``b``; gradient flows per branch only."""
    cond = np.asarray(getattr(cond, "data", cond), dtype=bool)
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.where(cond, a, b)
    a = a if isinstance(a, Var) else Var(a)
    b = b if isinstance(b, Var) else Var(b)
    out = Var(np.where(cond, a.data, b.data), (a, b), "where", {"cond": cond})

    def backward(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.data.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.data.shape),
        )

    out._backward = backward
    return out


def softplus(x):
    """Numerically stable log(1 + exp(x)) built from tape primitives."""
    if isinstance(x, Var):
        return x.maximum(0.0) + ((-x.abs()).exp() + 1.0).log()
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _topo_order(root: Var) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Var):
    """Accumulate gradients of a scalar ``loss`` into every tape node."""
    if loss.data.size != 1:
        raise ValueError("loss must be a scalar")
    if not np.all(np.isfinite(loss.data)):
        raise PoisonedGradientError("loss is not finite; refusing to backprop")
    order = _topo_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            parent.grad = parent.grad + g


class Tape:
    """Parameter registry plus gradient bookkeeping for one model.

    Parameters are leaf ``Var`` nodes created through :meth:`param`; the
    computation built on top of them is the recorded tape.  ``grad`` runs
    reverse accumulation, ``replay`` recomputes a root value from the
    recorded operations to check tape integrity.
    """

    def __init__(self):
        self.params: dict[str, Var] = {}

    def param(self, name: str, value) -> Var:
        v = Var(value)
        self.params[name] = v
        return v

    def values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load(self, values: dict):
        for k, v in values.items():
            self.params[k].data = _asarray(v)

    def grad(self, loss: Var) -> dict[str, np.ndarray]:
        backward(loss)
        return {k: (v.grad if v.grad is not None else np.zeros_like(v.data))
                for k, v in self.params.items()}

    @staticmethod
    def replay(root: Var) -> np.ndarray:
        """Recompute ``root`` from recorded ops; bit-exact with the forward pass."""
        order = _topo_order(root)
        values: dict[int, np.ndarray] = {}
        for node in order:
            if not node._parents:
                values[id(node)] = node.data
                continue
            args = [values[id(p)] for p in node._parents]
            values[id(node)] = _REPLAY[node._op](args, node._meta)
        return values[id(root)]


_REPLAY = {
    "add": lambda a, m: a[0] + a[1],
    "sub": lambda a, m: a[0] - a[1],
    "mul": lambda a, m: a[0] * a[1],
    "div": lambda a, m: a[0] / a[1],
    "neg": lambda a, m: -a[0],
    "pow": lambda a, m: a[0] ** m["exponent"],
    "exp": lambda a, m: np.exp(a[0]),
    "log": lambda a, m: np.log(a[0]),
    "sin": lambda a, m: np.sin(a[0]),
    "cos": lambda a, m: np.cos(a[0]),
    "sinh": lambda a, m: np.sinh(a[0]),
    "cosh": lambda a, m: np.cosh(a[0]),
    "sqrt": lambda a, m: np.sqrt(a[0]),
    "tanh": lambda a, m: np.tanh(a[0]),
    "abs": lambda a, m: np.abs(a[0]),
    "sum": lambda a, m: a[0].sum(axis=m["axis"], keepdims=m["keepdims"]),
    "matmul": lambda a, m: a[0] @ a[1],
    "reshape": lambda a, m: a[0].reshape(m["shape"]),
    "swapaxes": lambda a, m: np.swapaxes(a[0], m["a"], m["b"]),
    "getitem": lambda a, m: a[0][m["idx"]],
    "maximum": lambda a, m: np.maximum(a[0], a[1]),
    "where": lambda a, m: np.where(m["cond"], a[0], a[1]),
}
