"""A small define-by-run reverse-mode autodiff engine over float64 numpy arrays.

Only the handful of operations needed by the ranking block, the tensor
serial dictatorship and the losses are provided.  Every operation returns a
new :class:`Tensor`; when any input requires a gradient the output keeps a
reference to its inputs and a backward rule, so the graph reachable from a
scalar output is the tape replayed by :func:`backward`.

Subgradients at kinks: ``relu'(0) = 0``, ``abs'(0) = 0``, and
``triangle_window'`` takes the value of the branch on the left of a boundary.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

MAX_NDIM = 3


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim > MAX_NDIM:
            raise ShapeError(f"tensors of rank {data.ndim} are not supported (max {MAX_NDIM})")
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

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
        if isinstance(other, Tensor):
            raise TypeError("only division by a constant is supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: tuple, rule: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = rule
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    if len(shape) > MAX_NDIM:
        raise ShapeError(f"broadcast result {shape} exceeds rank {MAX_NDIM}")
    return shape


# --------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting)

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def abs(a) -> Tensor:  # noqa: A001 - mirrors the numpy name
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (g * sign,))


def triangle_window(a) -> Tensor:
    """Piecewise-linear bump: ``x`` on (0, 1], ``2 - x`` on (1, 2], else 0."""
    a = as_tensor(a)
    x = a.data
    rising = (x > 0) & (x <= 1)
    falling = (x > 1) & (x <= 2)
    out = np.where(rising, x, np.where(falling, 2.0 - x, 0.0))
    slope = rising.astype(np.float64) - falling
    return _node(out, (a,), lambda g: (g * slope,))


# --------------------------------------------------------------------------
# reductions and scans

def sum(a, axis=None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _node(a.data.sum(axis=axis), (a,), rule)


def colsum(a) -> Tensor:
    """Row vector of column sums of a matrix."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("colsum expects a matrix")
    return sum(a, axis=0)


def cumsum(a) -> Tensor:
    """Cumulative sum of a vector."""
    a = as_tensor(a)
    if a.ndim != 1:
        raise ShapeError("cumsum expects a vector")
    # reverse cumulative sum is the adjoint
    return _node(np.cumsum(a.data), (a,), lambda g: (np.cumsum(g[::-1])[::-1],))


# --------------------------------------------------------------------------
# linear algebra and shape manipulation

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError("matmul supports vectors and matrices only")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def rule(g):
        ga = gb = None
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = g @ b.data.T
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            elif b.ndim == 1:
                gb = a.data.T @ g
            else:
                gb = a.data.T @ g
        return ga, gb

    return _node(a.data @ b.data, (a, b), rule)


def outer(a, b) -> Tensor:
    """Outer product of two vectors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError("outer expects two vectors")
    return _node(np.multiply.outer(a.data, b.data), (a, b), lambda g: (g @ b.data, a.data @ g))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _node(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a, idx) -> Tensor:
    """Basic (slice / integer) indexing."""
    a = as_tensor(a)

    def rule(g):
        full = np.zeros(a.shape)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), rule)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _node(
        np.concatenate([p.data for p in parts], axis=axis),
        tuple(parts),
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def concat_rows(a, b) -> Tensor:
    return concat([a, b], axis=0)


def repeat(v, p: int) -> Tensor:
    """Stack ``p`` copies of vector ``v`` as the rows of a matrix."""
    v = as_tensor(v)
    if v.ndim != 1:
        raise ShapeError("repeat expects a vector")
    return _node(np.tile(v.data, (p, 1)), (v,), lambda g: (g.sum(axis=0),))


def stack_matvec(A, x) -> Tensor:
    """``sum_i x[i] * A[i]`` for a stack of matrices ``A``."""
    A, x = as_tensor(A), as_tensor(x)
    if A.ndim != 3 or x.ndim != 1 or A.shape[0] != x.shape[0]:
        raise ShapeError(f"stack_matvec shape mismatch {A.shape}, {x.shape}")
    return _node(
        np.tensordot(x.data, A.data, axes=1),
        (A, x),
        lambda g: (np.multiply.outer(x.data, g), np.tensordot(A.data, g, axes=2)),
    )


def stack_scale(A, x) -> Tensor:
    """Scale matrix ``A[i]`` of a stack by ``x[i]``."""
    A, x = as_tensor(A), as_tensor(x)
    if A.ndim != 3 or x.ndim != 1 or A.shape[0] != x.shape[0]:
        raise ShapeError(f"stack_scale shape mismatch {A.shape}, {x.shape}")
    xs = x.data[:, None, None]
    return _node(
        A.data * xs,
        (A, x),
        lambda g: (g * xs, np.einsum("ijk,ijk->i", g, A.data)),
    )


# --------------------------------------------------------------------------
# softmax family

def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("softmax_rows expects a matrix")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    return _node(y, (a,), lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))


def log_softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("log_softmax_rows expects a matrix")
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = z - lse
    sm = np.exp(y)
    return _node(y, (a,), lambda g: (g - sm * g.sum(axis=1, keepdims=True),))


# --------------------------------------------------------------------------
# reverse pass

def tape(output: Tensor) -> list[Tensor]:
    """Recorded nodes reachable from ``output`` in topological order."""
    order, seen = [], set()
    stack = [(output, False)]
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


def backward(output: Tensor) -> None:
    """Accumulate ``d output / d leaf`` into ``leaf.grad`` for every leaf on the tape."""
    if output.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise ValueError("output is not on the tape (no input requires grad)")
    grads = {id(output): np.ones_like(output.data)}
    for node in reversed(tape(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of ``f`` at ``x``.

    The error of each coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    out = f(leaf)
    if not np.isfinite(out.data).all():
        raise FloatingPointError("non-finite function value")
    backward(out)
    analytic = np.zeros_like(x0) if leaf.grad is None else leaf.grad
    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        hi = f(Tensor(x0.copy())).item()
        flat[k] = orig - eps
        lo = f(Tensor(x0.copy())).item()
        flat[k] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("non-finite function value under perturbation")
        numeric.reshape(-1)[k] = (hi - lo) / (2 * eps)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
