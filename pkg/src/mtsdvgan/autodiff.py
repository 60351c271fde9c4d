"""Minimal reverse-mode automatic differentiation over NumPy arrays.

A forward computation builds a tape of Tensor nodes; each node stores its
parents and one vector-Jacobian closure per parent.  ``grad`` walks the tape
in reverse topological order and accumulates exact derivatives for a chosen
set of leaves.  Only the handful of operations the networks and losses need
are implemented; heavy recurrent ops register themselves as single fused
nodes (see mtsdvgan.kernels).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class Tensor:
    """One node of the tape: a value plus backward wiring."""

    __slots__ = ("data", "parents", "vjps")

    def __init__(self, data, parents=(), vjps=()):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.parents: tuple = parents
        self.vjps: tuple = vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same value, cut from the tape."""
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def leaf(array: np.ndarray) -> Tensor:
    return Tensor(np.asarray(array))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data - b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * s, (a,), (lambda g: g * s,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data * a.data, (a,), (lambda g: g * (2.0 * a.data),))


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, (a,), (lambda g: g * (0.5 / out),))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), (lambda g: g * out,))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), (a,), (lambda g: g / a.data,))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), (lambda g: g * (out * (1.0 - out)),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values; gradient passes only where no clipping occurred."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)
    return Tensor(out, (a,), (lambda g: g * inside,))


def tsum(a: Tensor, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return np.broadcast_to(np.asarray(g), a.data.shape).astype(a.data.dtype, copy=True)
        gg = np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape).astype(a.data.dtype, copy=True)

    return Tensor(out, (a,), (back,))


def tmean(a: Tensor, axis=None) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra / shaping
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data @ b.data,
        (a, b),
        (lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """x @ W.T + b with W of shape (out, in)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    return Tensor(
        x.data @ W.data.T + b.data,
        (x, W, b),
        (
            lambda g: g @ W.data,
            lambda g: g.T @ x.data,
            lambda g: g.sum(axis=tuple(range(g.ndim - 1))),
        ),
    )


def reshape(a: Tensor, shape: tuple) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    return Tensor(a.data.reshape(shape), (a,), (lambda g: g.reshape(old),))


def take_step(a: Tensor, t: int) -> Tensor:
    """Select one timestep from a (B, k, n) sequence -> (B, n)."""
    a = as_tensor(a)

    def back(g):
        out = np.zeros_like(a.data)
        out[:, t, :] = g
        return out

    return Tensor(a.data[:, t, :], (a,), (back,))


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    """Select a column range of a 2-D tensor."""
    a = as_tensor(a)

    def back(g):
        out = np.zeros_like(a.data)
        out[:, lo:hi] = g
        return out

    return Tensor(a.data[:, lo:hi], (a,), (back,))


def repeat_steps(a: Tensor, k: int) -> Tensor:
    """Tile a (B, n) tensor into a (B, k, n) sequence."""
    a = as_tensor(a)
    out = np.broadcast_to(a.data[:, None, :], (a.data.shape[0], k, a.data.shape[1]))
    return Tensor(np.ascontiguousarray(out), (a,), (lambda g: g.sum(axis=1),))


def concat0(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_back(i):
        return lambda g: g[offsets[i]:offsets[i + 1]]

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=0),
        tuple(tensors),
        tuple(make_back(i) for i in range(len(tensors))),
    )


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before children


def grad(objective: Tensor, wrt: Iterable[Tensor]) -> list:
    """Exact gradients of a scalar objective for each tensor in ``wrt``.

    Backpropagation only traverses tape nodes through which some requested
    leaf is reachable, so unrelated parameter groups cost nothing and act
    as constants (the gradient of the discriminator objective with respect
    to generator weights is simply never formed).
    """
    wrt = list(wrt)
    if objective.data.size != 1:
        raise ValueError("objective must be a scalar")

    order = _toposort(objective)
    wanted = {id(t) for t in wrt}
    needs = {}
    for node in order:  # parents first: reachability propagates upward
        needs[id(node)] = id(node) in wanted or any(needs[id(p)] for p in node.parents)

    grads = {id(objective): np.ones_like(objective.data)}
    results = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if id(node) in wanted:
            results[id(node)] = g
        if callable(node.vjps):
            # fused node: one backward call yields every parent gradient
            mask = [needs[id(p)] for p in node.parents]
            contributions = node.vjps(g, mask)
        else:
            contributions = None
        for idx, parent in enumerate(node.parents):
            if not needs[id(parent)]:
                continue
            if contributions is not None:
                contribution = contributions[idx]
                if contribution is None:
                    continue
            else:
                contribution = node.vjps[idx](g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution

    out = []
    for t in wrt:
        g = results.get(id(t))
        out.append(np.zeros_like(t.data) if g is None else np.asarray(g))
    return out


def fused(value: np.ndarray, parents: Sequence[Tensor], vjps) -> Tensor:
    """Register an externally computed op (compiled kernel) on the tape.

    ``vjps`` is either one closure per parent or a single callable
    ``(grad, needs_mask) -> [grad_per_parent]`` that runs the whole fused
    backward in one call.
    """
    return Tensor(value, tuple(parents), vjps if callable(vjps) else tuple(vjps))
