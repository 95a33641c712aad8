"""Array-valued reverse-mode automatic differentiation.

A :class:`Tape` is an append-only Wengert list.  Each entry stores the
forward value, the tape indices of its parents and a closure mapping the
output cotangent to parent cotangents.  :meth:`Tape.backward` makes a single
sweep in reverse insertion order.

The module-level functions (:func:`exp`, :func:`log`, :func:`gather`, ...)
accept either :class:`Variable` or plain numpy input.  With plain input they
just compute the value, so numerical code written against them runs
unchanged with or without a tape.

Kinks: ``relu'(0) = 0``, ``|x|'(0) = 0``, and ``maximum(x, c)`` sends the
gradient to ``x`` only where ``x > c``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels


class TapeError(ValueError):
    """Raised on contract violations such as mixing tapes."""


def _unbroadcast(g, shape):
    if np.shape(g) == shape:
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Variable:
    """A node on a tape.  ``value`` is a float64 numpy array (0-d for scalars)."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Variable(index={self.index}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self):
        return sum_(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Callable | None] = []
        self.stored_floats = 0

    def __len__(self):
        return len(self._values)

    def variable(self, value) -> Variable:
        """Register a leaf (an input with respect to which gradients are taken)."""
        return self._push(np.array(value, dtype=np.float64), (), None)

    def _push(self, value, parents, vjp) -> Variable:
        idx = len(self._values)
        self._values.append(value)
        self._parents.append(parents)
        self._vjps.append(vjp)
        self.stored_floats += value.size
        return Variable(self, idx, value)

    def backward(self, output: Variable, seed=None) -> dict[int, np.ndarray]:
        """Reverse sweep from ``output``.

        Returns a map tape index -> cotangent for every node reached.  ``seed``
        defaults to 1 and must match ``output``'s shape otherwise.
        """
        if not isinstance(output, Variable) or output.tape is not self:
            raise TapeError("backward() called with a variable from a different tape")
        if seed is None:
            if output.value.size != 1:
                raise TapeError("non-scalar output needs an explicit seed")
            seed = np.ones_like(output.value)
        adj: list = [None] * (output.index + 1)
        adj[output.index] = np.asarray(seed, dtype=np.float64)
        parents = self._parents
        vjps = self._vjps
        for idx in range(output.index, -1, -1):
            g = adj[idx]
            if g is None or not parents[idx]:
                continue
            for p, gp in zip(parents[idx], vjps[idx](g)):
                if gp is None:
                    continue
                if adj[p] is None:
                    adj[p] = gp
                else:
                    adj[p] = adj[p] + gp
        return {i: g for i, g in enumerate(adj) if g is not None}

    def gradient(self, output: Variable, wrt: Sequence[Variable], seed=None) -> list[np.ndarray]:
        for v in wrt:
            if v.tape is not self:
                raise TapeError("gradient requested for a variable on a foreign tape")
        grads = self.backward(output, seed)
        return [grads.get(v.index, np.zeros_like(v.value)) for v in wrt]


# ---------------------------------------------------------------------------
# op plumbing


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Variable):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands live on different tapes")
    return tape


def value(x):
    """Forward value of ``x`` whether or not it is a Variable."""
    return x.value if isinstance(x, Variable) else x


def custom(inputs: Sequence, out_value, vjp: Callable):
    """Record an op with a hand-written vector-Jacobian product.

    ``vjp(g)`` must return one cotangent per entry of ``inputs`` (``None`` is
    allowed).  Non-Variable inputs are treated as constants.
    """
    tape = _tape_of(*inputs)
    out_value = np.asarray(out_value, dtype=np.float64)
    if tape is None:
        return out_value
    live = [k for k, x in enumerate(inputs) if isinstance(x, Variable)]
    parents = tuple(inputs[k].index for k in live)

    def _vjp(g):
        gs = vjp(g)
        return tuple(gs[k] for k in live)

    return tape._push(out_value, parents, _vjp)


def add(a, b):
    av, bv = value(a), value(b)
    out = np.add(av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return custom((a, b), out, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a):
    return custom((a,), -value(a), lambda g: (-g,))


def mul(a, b):
    av, bv = value(a), value(b)
    sa, sb = np.shape(av), np.shape(bv)
    return custom(
        (a, b),
        av * bv,
        lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)),
    )


def div(a, b):
    av, bv = value(a), value(b)
    sa, sb = np.shape(av), np.shape(bv)
    out = av / bv
    return custom(
        (a, b),
        out,
        lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * out / bv, sb)),
    )


def power(a, p: float):
    av = value(a)
    return custom((a,), av**p, lambda g: (g * p * av ** (p - 1),))


def exp(a):
    out = np.exp(value(a))
    return custom((a,), out, lambda g: (g * out,))


def log(a):
    av = value(a)
    return custom((a,), np.log(av), lambda g: (g / av,))


def tanh(a):
    out = np.tanh(value(a))
    return custom((a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a):
    av = value(a)
    mask = av > 0
    return custom((a,), np.where(mask, av, 0.0), lambda g: (g * mask,))


def abs_(a):
    av = value(a)
    return custom((a,), np.abs(av), lambda g: (g * np.sign(av),))


def maximum(a, c: float):
    """Elementwise ``max(a, c)`` against a constant floor."""
    av = value(a)
    mask = av > c
    return custom((a,), np.where(mask, av, c), lambda g: (g * mask,))


def sum_(a):
    av = value(a)
    shape = np.shape(av)
    return custom((a,), np.sum(av), lambda g: (np.broadcast_to(g, shape).copy(),))


def dot(a, b):
    """Inner product of two 1-d arrays."""
    av, bv = value(a), value(b)
    return custom((a, b), np.dot(av, bv), lambda g: (g * bv, g * av))


def matmul(a, b):
    av, bv = value(a), value(b)

    def vjp(g):
        ga = g @ bv.T if bv.ndim == 2 else np.outer(g, bv)
        if av.ndim == 1:
            gb = np.outer(av, g) if bv.ndim == 2 else g * av
        else:
            gb = av.T @ g
        return ga, gb

    return custom((a, b), av @ bv, vjp)


def reshape(a, shape):
    av = value(a)
    old = av.shape
    return custom((a,), av.reshape(shape), lambda g: (np.reshape(g, old),))


def transpose(a):
    return custom((a,), value(a).T, lambda g: (g.T,))


def gather(a, idx: np.ndarray):
    """Rows ``a[idx]``; the reverse pass scatters back."""
    av = value(a)
    n = av.shape[0]
    return custom((a,), av[idx], lambda g: (kernels.scatter_add(g, idx, n),))


def scatter_add(a, idx: np.ndarray, n: int):
    """Sum rows of ``a`` into ``n`` buckets given by ``idx``."""
    av = value(a)
    return custom((a,), kernels.scatter_add(av, idx, n), lambda g: (g[idx],))


def concat(parts: Sequence, axis: int = -1):
    vals = [value(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return custom(parts, out, lambda g: tuple(np.split(g, sizes, axis=axis)))
