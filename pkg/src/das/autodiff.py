"""Reverse-mode automatic differentiation over float64 numpy arrays.

A small, exact primitive set: every operation computes its value in
64-bit precision, registers a vector-Jacobian product, and refuses to
propagate NaN/Inf. Graphs are acyclic; `backward` accumulates gradients
additively across fan-out, and detached nodes stop the flow.
"""

from __future__ import annotations

import numpy as np


class NumericFault(ArithmeticError):
    """A computation produced NaN/Inf or consumed a non-finite value."""


def as_tensor(x) -> np.ndarray:
    """Coerce to a float64 ndarray (the library's only numeric dtype)."""
    return np.asarray(x, dtype=np.float64)


def _check_finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericFault(f"non-finite result in '{op}'")
    return value


class Node:
    """One vertex of the computation graph.

    `value` and `grad` always share a shape. Leaf nodes carry no parents;
    a leaf built via `param_node` shares its grad buffer with an external
    owner so backward() deposits gradients there directly.
    """

    __slots__ = ("value", "grad", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None, grad=None):
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value) if grad is None else grad
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, leaf={not self.parents})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x) -> Node:
    """Leaf node that never receives a gradient of interest."""
    return Node(x)


def param_node(value: np.ndarray, grad: np.ndarray) -> Node:
    """Leaf node whose grad buffer is owned by the caller (a ParameterStore)."""
    if value.shape != grad.shape:
        raise ValueError(f"grad shape {grad.shape} != value shape {value.shape}")
    node = Node(value, grad=grad)
    return node


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(op: str, value: np.ndarray, parents, vjp) -> Node:
    return Node(_check_finite(value, op), parents=parents, vjp=vjp)


def _broadcast_shape(op: str, a: Node, b: Node) -> tuple:
    try:
        return np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ValueError(
            f"shape mismatch for {op}: {a.value.shape} vs {b.value.shape}"
        ) from None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, reversing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("add", a, b)
    value = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return _make("add", value, (a, b), vjp)


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("sub", a, b)
    value = a.value - b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return _make("sub", value, (a, b), vjp)


def mul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("mul", a, b)
    value = a.value * b.value

    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return _make("mul", value, (a, b), vjp)


def div(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("div", a, b)
    value = a.value / b.value

    def vjp(g):
        return (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        )

    return _make("div", value, (a, b), vjp)


def scale(a, c: float) -> Node:
    """Multiply by a python scalar (non-differentiable constant)."""
    a = _as_node(a)
    c = float(c)
    return _make("scale", a.value * c, (a,), lambda g: (g * c,))


def neg(a) -> Node:
    return scale(a, -1.0)


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation

def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ValueError(
            f"matmul requires ndim >= 2 operands, got {a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ValueError(
            f"shape mismatch for matmul: {a.value.shape} vs {b.value.shape}"
        )
    value = np.matmul(a.value, b.value)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(ga, a.value.shape), _unbroadcast(gb, b.value.shape)

    return _make("matmul", value, (a, b), vjp)


def reshape(a, shape) -> Node:
    a = _as_node(a)
    shape = tuple(shape)
    value = a.value.reshape(shape)
    return _make("reshape", value, (a,), lambda g: (g.reshape(a.value.shape),))


def broadcast_to(a, shape) -> Node:
    a = _as_node(a)
    shape = tuple(shape)
    try:
        value = np.broadcast_to(a.value, shape)
    except ValueError:
        raise ValueError(
            f"cannot broadcast {a.value.shape} to {shape}"
        ) from None
    return _make(
        "broadcast", np.ascontiguousarray(value), (a,),
        lambda g: (_unbroadcast(g, a.value.shape),),
    )


def concatenate(nodes, axis: int = 0) -> Node:
    nodes = [_as_node(n) for n in nodes]
    value = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = [n.value.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concatenate", value, tuple(nodes), vjp)


# ---------------------------------------------------------------------------
# reductions

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, (int, np.integer)):
        axis = (int(axis),)
    return tuple(a % ndim for a in axis)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Node:
    a = _as_node(a)
    axes = _norm_axes(axis, a.value.ndim)
    value = a.value.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.value.shape).copy(),)

    return _make("sum", value, (a,), vjp)


def tensor_mean(a, axis=None, keepdims: bool = False) -> Node:
    a = _as_node(a)
    axes = _norm_axes(axis, a.value.ndim)
    count = int(np.prod([a.value.shape[i] for i in axes]))
    value = a.value.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.value.shape).copy() / count,)

    return _make("mean", value, (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities

def softmax(a, axis: int = -1) -> Node:
    a = _as_node(a)
    if a.value.shape[axis] < 1:
        raise ValueError(f"softmax axis extent must be >= 1, got shape {a.value.shape}")
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        return (value * (g - inner),)

    return _make("softmax", value, (a,), vjp)


def softplus(a) -> Node:
    a = _as_node(a)
    # log(1 + e^x) computed without overflow for large |x|
    value = np.maximum(a.value, 0.0) + np.log1p(np.exp(-np.abs(a.value)))
    sig = _sigmoid(a.value)
    return _make("softplus", value, (a,), lambda g: (g * sig,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Node:
    a = _as_node(a)
    value = _sigmoid(a.value)
    return _make("sigmoid", value, (a,), lambda g: (g * value * (1.0 - value),))


def tanh(a) -> Node:
    a = _as_node(a)
    value = np.tanh(a.value)
    return _make("tanh", value, (a,), lambda g: (g * (1.0 - value * value),))


def exp(a) -> Node:
    a = _as_node(a)
    value = np.exp(a.value)
    return _make("exp", value, (a,), lambda g: (g * value,))


def log(a) -> Node:
    a = _as_node(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.value)
    return _make("log", value, (a,), lambda g: (g / a.value,))


def detach(a) -> Node:
    """Copy of `a` that contributes zero gradient upstream."""
    a = _as_node(a)
    return Node(a.value)


# ---------------------------------------------------------------------------
# backward pass

def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into every reachable node's grad.

    `root` must hold a single scalar. Fan-out accumulates additively;
    detached edges contribute nothing.
    """
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")

    order = _topo_order(root)
    root.grad += 1.0
    for node in order:
        if node.vjp is None:
            continue
        grads = node.vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            parent.grad += g


def _topo_order(root: Node) -> list:
    """Reverse topological order (root first), iterative to spare the stack."""
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order
