"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray; primitive operations record themselves on the
implicit graph so ``backward`` can propagate gradients to leaf parameters.
``Tape`` materializes the recorded nodes in topological order and can replay
the forward pass bit-for-bit at fixed precision.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Shape or dimension contract violation."""


class NumericError(ArithmeticError):
    """Non-finite value encountered where finiteness is required."""


def _as_array(x, dtype=None) -> np.ndarray:
    a = np.asarray(x, dtype=dtype)
    if a.dtype == np.float64 or a.dtype == np.float32:
        return a
    return a.astype(np.float64)


class Tensor:
    """Array node of the computation graph.

    Leaf tensors (``op is None``) hold data directly; non-leaf tensors
    remember the primitive that produced them.
    """

    __slots__ = ("data", "op", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, op: "Op | None" = None):
        self.data = _as_array(data)
        self.op = op
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "double" if self.data.dtype == np.float64 else "single"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

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

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def parameter(data, dtype=np.float32) -> Tensor:
    """Create a differentiable leaf tensor."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None) -> Tensor:
    return Tensor(_as_array(data, dtype=dtype))


class Op:
    """One recorded primitive application."""

    name = "op"

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self) -> np.ndarray:
        """Recompute the output from the current input data (used by replay)."""
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple:
        """Return one gradient array (or None) per input."""
        raise NotImplementedError

    def make(self) -> Tensor:
        out = Tensor(self.forward(), op=self)
        out.requires_grad = any(t.requires_grad for t in self.inputs)
        return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

class Add(Op):
    name = "add"

    def forward(self):
        a, b = self.inputs
        return a.data + b.data

    def backward(self, grad):
        a, b = self.inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Sub(Op):
    name = "sub"

    def forward(self):
        a, b = self.inputs
        return a.data - b.data

    def backward(self, grad):
        a, b = self.inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)


class Mul(Op):
    name = "mul"

    def forward(self):
        a, b = self.inputs
        return a.data * b.data

    def backward(self, grad):
        a, b = self.inputs
        return (
            _unbroadcast(grad * b.data, a.shape),
            _unbroadcast(grad * a.data, b.shape),
        )


class Div(Op):
    name = "div"

    def forward(self):
        a, b = self.inputs
        return a.data / b.data

    def backward(self, grad):
        a, b = self.inputs
        ga = grad / b.data
        gb = -grad * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


class Neg(Op):
    name = "neg"

    def forward(self):
        return -self.inputs[0].data

    def backward(self, grad):
        return (-grad,)


class PowConst(Op):
    name = "pow"

    def __init__(self, x: Tensor, p: float):
        super().__init__(x)
        self.p = float(p)

    def forward(self):
        return self.inputs[0].data ** self.p

    def backward(self, grad):
        x = self.inputs[0].data
        return (grad * self.p * x ** (self.p - 1.0),)


class Exp(Op):
    name = "exp"

    def forward(self):
        self.out = np.exp(self.inputs[0].data)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Op):
    name = "log"

    def forward(self):
        return np.log(self.inputs[0].data)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Sqrt(Op):
    name = "sqrt"

    def forward(self):
        self.out = np.sqrt(self.inputs[0].data)
        return self.out

    def backward(self, grad):
        # floor avoids a zero division at the (non-differentiable) origin
        denom = np.maximum(self.out, np.asarray(1e-30, dtype=self.out.dtype))
        return (grad * 0.5 / denom,)


class Abs(Op):
    name = "abs"

    def forward(self):
        return np.abs(self.inputs[0].data)

    def backward(self, grad):
        return (grad * np.sign(self.inputs[0].data),)


def add(a, b):
    return Add(a, b).make()


def sub(a, b):
    return Sub(a, b).make()


def mul(a, b):
    return Mul(a, b).make()


def div(a, b):
    return Div(a, b).make()


def neg(a):
    return Neg(a).make()


def pow_const(a, p):
    return PowConst(a, p).make()


def exp(a):
    return Exp(a).make()


def log(a):
    return Log(a).make()


def sqrt(a):
    return Sqrt(a).make()


def tabs(a):
    return Abs(a).make()


# ---------------------------------------------------------------------------
# linear algebra and reductions
# ---------------------------------------------------------------------------

class Matmul(Op):
    name = "matmul"

    def __init__(self, a: Tensor, b: Tensor):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError("matmul requires operands with ndim >= 2")
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(
                f"matmul inner extents differ: {a.shape} x {b.shape}"
            )
        super().__init__(a, b)

    def forward(self):
        a, b = self.inputs
        return a.data @ b.data

    def backward(self, grad):
        a, b = self.inputs
        ga = grad @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ grad
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


class Sum(Op):
    name = "sum"

    def __init__(self, x: Tensor, axis=None, keepdims=False):
        super().__init__(x)
        self.axis = axis
        self.keepdims = keepdims

    def forward(self):
        return np.sum(self.inputs[0].data, axis=self.axis, keepdims=self.keepdims)

    def backward(self, grad):
        x = self.inputs[0]
        if self.axis is None:
            return (np.broadcast_to(grad, x.shape).astype(x.dtype, copy=False),)
        g = grad
        if not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=False),)


class Mean(Op):
    name = "mean"

    def __init__(self, x: Tensor, axis=None, keepdims=False):
        super().__init__(x)
        self.axis = axis
        self.keepdims = keepdims

    def forward(self):
        return np.mean(self.inputs[0].data, axis=self.axis, keepdims=self.keepdims)

    def backward(self, grad):
        x = self.inputs[0]
        if self.axis is None:
            n = x.size
            g = grad
        else:
            axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
            n = 1
            for ax in axes:
                n *= x.shape[ax]
            g = grad if self.keepdims else np.expand_dims(grad, self.axis)
        return (np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=False),)


def matmul(a, b):
    return Matmul(a, b).make()


def tsum(x, axis=None, keepdims=False):
    return Sum(x, axis=axis, keepdims=keepdims).make()


def tmean(x, axis=None, keepdims=False):
    return Mean(x, axis=axis, keepdims=keepdims).make()


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

class Reshape(Op):
    name = "reshape"

    def __init__(self, x: Tensor, shape):
        super().__init__(x)
        self.target = tuple(shape)

    def forward(self):
        return self.inputs[0].data.reshape(self.target)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Op):
    name = "transpose"

    def __init__(self, x: Tensor, axes):
        super().__init__(x)
        self.axes = tuple(axes) if axes is not None else tuple(range(x.ndim))[::-1]

    def forward(self):
        return np.transpose(self.inputs[0].data, self.axes)

    def backward(self, grad):
        inv = np.argsort(self.axes)
        return (np.transpose(grad, inv),)


class GetItem(Op):
    name = "getitem"

    def __init__(self, x: Tensor, key):
        super().__init__(x)
        self.key = key

    def forward(self):
        return self.inputs[0].data[self.key]

    def backward(self, grad):
        out = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        np.add.at(out, self.key, grad)
        return (out,)


class Concat(Op):
    name = "concat"

    def __init__(self, tensors: Sequence[Tensor], axis: int):
        super().__init__(*tensors)
        self.axis = axis

    def forward(self):
        return np.concatenate([t.data for t in self.inputs], axis=self.axis)

    def backward(self, grad):
        sizes = [t.shape[self.axis] for t in self.inputs]
        splits = np.cumsum(sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Roll(Op):
    name = "roll"

    def __init__(self, x: Tensor, shift: int, axis: int):
        super().__init__(x)
        self.shift = shift
        self.axis = axis

    def forward(self):
        return np.roll(self.inputs[0].data, self.shift, axis=self.axis)

    def backward(self, grad):
        return (np.roll(grad, -self.shift, axis=self.axis),)


def reshape(x, shape):
    return Reshape(x, shape).make()


def transpose(x, axes=None):
    return Transpose(x, axes).make()


def getitem(x, key):
    return GetItem(x, key).make()


def concat(tensors, axis=0):
    return Concat(tensors, axis).make()


def roll(x, shift, axis):
    return Roll(x, shift, axis).make()


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Sigmoid(Op):
    name = "sigmoid"

    def forward(self):
        self.out = _sigmoid(self.inputs[0].data)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Silu(Op):
    name = "silu"

    def forward(self):
        x = self.inputs[0].data
        self.sig = _sigmoid(x)
        return x * self.sig

    def backward(self, grad):
        x = self.inputs[0].data
        s = self.sig
        return (grad * (s + x * s * (1.0 - s)),)


_GELU_C = math.sqrt(2.0 / math.pi)


class Gelu(Op):
    """tanh-approximation GELU."""

    name = "gelu"

    def forward(self):
        x = self.inputs[0].data
        self.inner = _GELU_C * (x + 0.044715 * x ** 3)
        self.t = np.tanh(self.inner)
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad):
        x = self.inputs[0].data
        t = self.t
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)


class Softplus(Op):
    name = "softplus"

    def forward(self):
        x = self.inputs[0].data
        return np.logaddexp(np.asarray(0.0, dtype=x.dtype), x)

    def backward(self, grad):
        return (grad * _sigmoid(self.inputs[0].data),)


class Softmax(Op):
    """Softmax over the last axis."""

    name = "softmax"

    def forward(self):
        x = self.inputs[0].data
        z = x - np.max(x, axis=-1, keepdims=True)
        e = np.exp(z)
        self.out = e / np.sum(e, axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        dot = np.sum(grad * y, axis=-1, keepdims=True)
        return (y * (grad - dot),)


def sigmoid(x):
    return Sigmoid(x).make()


def silu(x):
    return Silu(x).make()


def gelu(x):
    return Gelu(x).make()


def softplus(x):
    return Softplus(x).make()


def softmax(x):
    return Softmax(x).make()


class LayerNorm(Op):
    """Normalize the last axis to zero mean / unit variance, then affine."""

    name = "layer_norm"

    def __init__(self, x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5):
        if x.shape[-1] == 0:
            raise DimensionError("layer_norm over an empty axis")
        if eps < 0:
            raise ValueError("eps must be >= 0")
        super().__init__(x, gain, bias)
        self.eps = eps

    def forward(self):
        x = self.inputs[0].data
        mu = np.mean(x, axis=-1, keepdims=True)
        var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        self.xhat = (x - mu) * self.inv
        return self.xhat * self.inputs[1].data + self.inputs[2].data

    def backward(self, grad):
        gain = self.inputs[1].data
        xhat = self.xhat
        d = xhat.shape[-1]
        gy = grad * gain
        m1 = np.mean(gy, axis=-1, keepdims=True)
        m2 = np.mean(gy * xhat, axis=-1, keepdims=True)
        dx = (gy - m1 - xhat * m2) * self.inv
        reduce_axes = tuple(range(grad.ndim - 1))
        dgain = np.sum(grad * xhat, axis=reduce_axes)
        dbias = np.sum(grad, axis=reduce_axes)
        return dx, dgain, dbias


def layer_norm(x, gain, bias, eps: float = 1e-5):
    return LayerNorm(x, gain, bias, eps).make()


# ---------------------------------------------------------------------------
# tape, backward, gradient checking
# ---------------------------------------------------------------------------

def topo_order(root: Tensor) -> list[Tensor]:
    """All graph nodes reachable from ``root``, inputs before consumers."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.op is not None:
            for parent in node.op.inputs:
                if id(parent) not in visited:
                    stack.append((parent, False))
    return order


class Tape:
    """Recorded forward pass: nodes in topological order plus its leaves."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        return cls(topo_order(root))

    @property
    def parameters(self) -> list[Tensor]:
        return [n for n in self.nodes if n.op is None and n.requires_grad]

    def replay(self) -> None:
        """Recompute every non-leaf node from current leaf data."""
        for node in self.nodes:
            if node.op is not None:
                node.data = node.op.forward()


def backward(loss: Tensor, params: Iterable[Tensor]) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. each tensor in ``params``.

    Returns a mapping keyed by ``id(param)``; parameters the loss does not
    reach get zero gradients. Also mirrors results into ``param.grad``.
    """
    if loss.size != 1:
        raise DimensionError("backward requires a scalar loss node")
    params = list(params)
    order = topo_order(loss)
    grads: dict[int, np.ndarray] = {
        id(loss): np.ones_like(loss.data)
    }
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node.op is None:
            if g is not None and node.op is None:
                grads[id(node)] = g  # keep leaf grads
            continue
        if not node.requires_grad:
            continue
        in_grads = node.op.backward(g)
        for parent, ig in zip(node.op.inputs, in_grads):
            if ig is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
    result: dict[int, np.ndarray] = {}
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        result[id(p)] = g
        p.grad = g
    return result


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a zero-argument callable returning a scalar Tensor that
    depends on ``params``; evaluate in double precision for meaningful bounds.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    out = f()
    if out.size != 1:
        raise DimensionError("grad_check target must be scalar")
    if not np.isfinite(out.data).all():
        raise NumericError("non-finite forward value in grad_check")
    analytic = backward(out, params)
    tiny = 1e-12
    worst = 0.0
    for p in params:
        a = analytic[id(p)]
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            fp = f().item()
            flat[i] = keep - step
            fm = f().item()
            flat[i] = keep
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NumericError("non-finite forward value in grad_check")
            numeric = (fp - fm) / (2.0 * step)
            ana = float(a.reshape(-1)[i])
            err = abs(ana - numeric) / (abs(ana) + abs(numeric) + tiny)
            if err > worst:
                worst = err
    return worst


def assert_finite(x: Tensor | np.ndarray, what: str = "value") -> None:
    data = x.data if isinstance(x, Tensor) else x
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite {what}")
