"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Eager evaluation: each op computes its value immediately and records
value-level vector-Jacobian closures. One reverse sweep then yields exact
gradients with respect to every leaf. Input-derivative channels of the
networks are built as explicit forward computations out of these same ops,
so a single reverse sweep differentiates through them too; no double
backward is ever needed.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError

Array = np.ndarray


class Var:
    """Graph node holding a float64 array value.

    needs=False marks constants (data); gradients are neither stored nor
    propagated through them.
    """

    __slots__ = ("value", "grad", "needs", "parents")

    def __init__(self, value, needs: bool, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.needs = needs
        self.parents = parents  # tuple of (Var, vjp callable)

    @property
    def shape(self):
        return self.value.shape

    # numpy must not try to broadcast over Var; fall back to our operators
    __array_ufunc__ = None

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(value) -> Var:
    return Var(value, True)


def const(value) -> Var:
    return Var(value, False)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x, False)


def _node(value, parents) -> Var:
    live = tuple((p, fn) for p, fn in parents if p.needs)
    return Var(value, bool(live), live)


def _unbroadcast(g: Array, shape: tuple) -> Array:
    """Reduce an upstream gradient back to a broadcast operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value + b.value,
                 ((a, lambda g: _unbroadcast(g, a.value.shape)),
                  (b, lambda g: _unbroadcast(g, b.value.shape))))


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value - b.value,
                 ((a, lambda g: _unbroadcast(g, a.value.shape)),
                  (b, lambda g: _unbroadcast(-g, b.value.shape))))


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value * b.value,
                 ((a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                  (b, lambda g: _unbroadcast(g * a.value, b.value.shape))))


def div(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    inv = 1.0 / b.value
    return _node(a.value * inv,
                 ((a, lambda g: _unbroadcast(g * inv, a.value.shape)),
                  (b, lambda g: _unbroadcast(-g * a.value * inv * inv, b.value.shape))))


def neg(a) -> Var:
    a = _wrap(a)
    return _node(-a.value, ((a, lambda g: -g),))


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return _node(a.value @ b.value,
                 ((a, lambda g: g @ b.value.T),
                  (b, lambda g: a.value.T @ g)))


def tanh(a) -> Var:
    a = _wrap(a)
    t = np.tanh(a.value)
    return _node(t, ((a, lambda g: g * (1.0 - t * t)),))


def relu(a) -> Var:
    a = _wrap(a)
    mask = a.value > 0.0
    return _node(np.where(mask, a.value, 0.0), ((a, lambda g: g * mask),))


def clamp01(a) -> Var:
    """Clip to [0, 1]; gradient passes inside the closed interval."""
    a = _wrap(a)
    mask = (a.value >= 0.0) & (a.value <= 1.0)
    return _node(np.clip(a.value, 0.0, 1.0), ((a, lambda g: g * mask),))


def square(a) -> Var:
    a = _wrap(a)
    return _node(a.value * a.value, ((a, lambda g: g * (2.0 * a.value)),))


def vsum(a) -> Var:
    a = _wrap(a)
    return _node(np.sum(a.value), ((a, lambda g: np.broadcast_to(g, a.value.shape).copy()),))


def reshape(a, shape) -> Var:
    a = _wrap(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))


def concat_cols(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    na = a.value.shape[1]
    return _node(np.concatenate([a.value, b.value], axis=1),
                 ((a, lambda g: g[:, :na]),
                  (b, lambda g: g[:, na:])))


def take(a, start: int, stop: int, shape=None) -> Var:
    """Slice a 1-D Var; the backward pass scatters into the original extent."""
    a = _wrap(a)
    val = a.value[start:stop]
    if shape is not None:
        val = val.reshape(shape)
    n = a.value.shape[0]

    def vjp(g, start=start, stop=stop, n=n):
        out = np.zeros(n)
        out[start:stop] = g.ravel()
        return out

    return _node(val, ((a, vjp),))


def gate(a) -> Var:
    """Heaviside of the value as a detached constant (relu derivative factor)."""
    a = _wrap(a)
    return const((a.value > 0.0).astype(np.float64))


def _toposort(root: Var) -> list[Var]:
    order: list[Var] = []
    state: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        st = state.get(id(node), 0)
        if st == 0:
            state[id(node)] = 1
            for p, _ in node.parents:
                if p.needs and state.get(id(p), 0) == 0:
                    stack.append(p)
        elif st == 1:
            state[id(node)] = 2
            order.append(node)
            stack.pop()
        else:
            stack.pop()
    return order


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every reachable leaf."""
    if root.value.ndim != 0 and root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    order = _toposort(root)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def value_and_grad(build, params: Array) -> tuple[float, Array]:
    """Evaluate a scalar graph built from one flat leaf and differentiate it.

    Args:
        build: callable taking the flat parameter leaf Var and returning a
            scalar Var.
        params: flat float64 parameter vector.

    Returns:
        (scalar value, gradient array of params' shape).

    Raises:
        NumericsError: non-finite output value.
    """
    root = leaf(np.array(params, dtype=np.float64, copy=True))
    out = build(root)
    val = float(out.value)
    if not np.isfinite(val):
        raise NumericsError("objective value is not finite", tag="objective")
    backward(out)
    g = root.grad if root.grad is not None else np.zeros_like(root.value)
    return val, g
