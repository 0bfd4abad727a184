"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation records a closure that scatters the output gradient
back to its tensor parents; ``Tensor.backward`` walks the recorded
graph once in reverse topological order.  Double precision throughout
so finite-difference checks can be tight.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class Tensor:
    """A numpy array with an optional gradient and a backward closure."""

    __slots__ = ("values", "grad", "_parents", "_backward")

    def __init__(self, values, parents: tuple["Tensor", ...] = (), backward: Callable | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Array | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def zero_grad(self):
        self.grad = None

    def backward(self, seed: Array | None = None):
        """Accumulate gradients of this (typically scalar) node's output
        into every tensor that feeds it."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        self.grad = np.ones_like(self.values) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Small conveniences; the heavy lifting stays in module functions.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"


def tensor(values) -> Tensor:
    return Tensor(values)


def _accumulate(t: Tensor, grad: Array):
    if t.grad is None:
        t.grad = grad.copy() if grad.shape == t.values.shape else _unbroadcast(grad, t.values.shape)
    else:
        t.grad += grad if grad.shape == t.values.shape else _unbroadcast(grad, t.values.shape)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient over the axes numpy broadcast during the forward pass."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _values(x) -> Array:
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def add(a, b) -> Tensor:
    av, bv = _values(a), _values(b)
    parents = tuple(t for t in (a, b) if isinstance(t, Tensor))
    out = Tensor(av + bv, parents)

    def backward(g):
        if isinstance(a, Tensor):
            _accumulate(a, g)
        if isinstance(b, Tensor):
            _accumulate(b, g)

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    av, bv = _values(a), _values(b)
    parents = tuple(t for t in (a, b) if isinstance(t, Tensor))
    out = Tensor(av - bv, parents)

    def backward(g):
        if isinstance(a, Tensor):
            _accumulate(a, g)
        if isinstance(b, Tensor):
            _accumulate(b, -g)

    out._backward = backward
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.values, (a,))
    out._backward = lambda g: _accumulate(a, -g)
    return out


def mul(a, b) -> Tensor:
    av, bv = _values(a), _values(b)
    parents = tuple(t for t in (a, b) if isinstance(t, Tensor))
    out = Tensor(av * bv, parents)

    def backward(g):
        if isinstance(a, Tensor):
            _accumulate(a, g * bv)
        if isinstance(b, Tensor):
            _accumulate(b, g * av)

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    av, bv = _values(a), _values(b)
    parents = tuple(t for t in (a, b) if isinstance(t, Tensor))
    out = Tensor(av @ bv, parents)

    def backward(g):
        if isinstance(a, Tensor):
            ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.outer(g, bv)
            _accumulate(a, ga if ga.shape == av.shape else _reduce_leading(ga, av.shape))
        if isinstance(b, Tensor):
            if av.ndim == 1:
                gb = np.outer(av, g)
            else:
                gb = np.swapaxes(av, -1, -2) @ g
            _accumulate(b, gb if gb.shape == bv.shape else _reduce_leading(gb, bv.shape))

    out._backward = backward
    return out


def _reduce_leading(grad: Array, shape: tuple[int, ...]) -> Array:
    """Collapse broadcast batch dimensions introduced by matmul."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def sigmoid(x: Tensor) -> Tensor:
    # 0.5 * (1 + tanh(x/2)) is the overflow-safe form
    s = 0.5 * (1.0 + np.tanh(0.5 * x.values))
    out = Tensor(s, (x,))
    out._backward = lambda g: _accumulate(x, g * s * (1.0 - s))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.values)
    out = Tensor(t, (x,))
    out._backward = lambda g: _accumulate(x, g * (1.0 - t * t))
    return out


def elu(x: Tensor) -> Tensor:
    v = x.values
    y = np.where(v > 0, v, np.expm1(np.minimum(v, 0.0)))  # clamp avoids overflow in the dead branch
    out = Tensor(y, (x,))
    out._backward = lambda g: _accumulate(x, g * np.where(v > 0, 1.0, y + 1.0))
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    v = x.values
    m = np.max(v, axis=axis, keepdims=True)
    e = np.exp(v - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, (x,))

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(x, y * (g - inner))

    out._backward = backward
    return out


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    v = x.values
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv
    out = Tensor(xhat, (x,))

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (g - gm - xhat * gx))

    out._backward = backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    values = np.concatenate([t.values for t in tensors], axis=axis)
    out = Tensor(values, tuple(tensors))
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis if axis >= 0 else g.ndim + axis] = slice(start, stop)
            _accumulate(t, g[tuple(index)])

    out._backward = backward
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(x.values[index], (x,))

    def backward(g):
        full = np.zeros_like(x.values)
        full[index] = g
        _accumulate(x, full)

    out._backward = backward
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.values.reshape(shape), (x,))
    out._backward = lambda g: _accumulate(x, g.reshape(x.values.shape))
    return out


def swap_last(x: Tensor) -> Tensor:
    out = Tensor(np.swapaxes(x.values, -1, -2), (x,))
    out._backward = lambda g: _accumulate(x, np.swapaxes(g, -1, -2))
    return out


def total(x: Tensor) -> Tensor:
    out = Tensor(x.values.sum(), (x,))
    out._backward = lambda g: _accumulate(x, np.broadcast_to(g, x.values.shape).copy())
    return out


def mean(x: Tensor) -> Tensor:
    n = x.values.size
    out = Tensor(x.values.mean(), (x,))
    out._backward = lambda g: _accumulate(x, np.broadcast_to(g / n, x.values.shape).copy())
    return out


def maximum(a, b) -> Tensor:
    av, bv = _values(a), _values(b)
    parents = tuple(t for t in (a, b) if isinstance(t, Tensor))
    out = Tensor(np.maximum(av, bv), parents)
    pick_a = av >= bv

    def backward(g):
        if isinstance(a, Tensor):
            _accumulate(a, np.where(pick_a, g, 0.0))
        if isinstance(b, Tensor):
            _accumulate(b, np.where(pick_a, 0.0, g))

    out._backward = backward
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: identity at inference, mean-preserving at training."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.values.shape) >= p) / (1.0 - p)
    return mul(x, mask)


def grad_check(
    make_loss: Callable[[], Tensor],
    wrt: Iterable[Tensor],
    step: float = 1e-5,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare reverse-mode gradients against central finite differences.

    ``make_loss`` must rebuild the scalar loss from the same tensor
    objects on every call (and be deterministic, so no training-mode
    dropout).  Sampling ``max_coords_per_tensor`` coordinates keeps the
    check affordable on larger models.  Returns the worst per-tensor
    relative error, where each tensor's error is measured in the
    infinity norm over the checked coordinates.
    """
    wrt = list(wrt)
    for t in wrt:
        t.zero_grad()
    loss = make_loss()
    if loss.values.size != 1:
        raise ValueError("grad_check expects a scalar loss")
    loss.backward()
    analytic = [np.zeros_like(t.values) if t.grad is None else t.grad.copy() for t in wrt]

    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for t, a in zip(wrt, analytic):
        flat = t.values.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = np.arange(n)
        fd = np.empty(len(coords))
        for out_idx, i in enumerate(coords):
            original = flat[i]
            flat[i] = original + step
            f_plus = float(make_loss().values)
            flat[i] = original - step
            f_minus = float(make_loss().values)
            flat[i] = original
            fd[out_idx] = (f_plus - f_minus) / (2.0 * step)
        a_sel = a.reshape(-1)[coords]
        scale = max(np.max(np.abs(a_sel), initial=0.0), np.max(np.abs(fd), initial=0.0), 1e-12)
        worst = max(worst, float(np.max(np.abs(a_sel - fd), initial=0.0)) / scale)
    return worst
