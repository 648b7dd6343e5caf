"""Reverse-mode automatic differentiation on numpy arrays.

A minimal tape: every operation returns a node that remembers its inputs
and a closure routing the output gradient back to them.  The graph is
rebuilt on every evaluation, so losses are free to change shape between
calls.  Everything is float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "matmul",
    "sparse_propagate",
    "sigmoid",
    "relu",
    "log",
    "exp",
    "maximum",
    "clip",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "slice_cols",
    "reshape",
    "feature_matrix",
    "log_sum_exp",
    "grad",
    "finite_diff_check",
]


class Tensor:
    """One node of the expression tape: a float64 array plus backward hook."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, value, parents=(), backprop=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backprop = backprop
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.value.size != 1:
            raise ValueError(f"backward() needs a scalar root, got shape {self.shape}")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backprop is not None and node.grad is not None:
                node._backprop(node.grad)

    # arithmetic sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a supported primitive")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(value) -> Tensor:
    return Tensor(value)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise and linear primitives ------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def backprop(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    out._backprop = backprop
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def backprop(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    out._backprop = backprop
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backprop(g):
        av, bv = a.value, b.value
        if av.ndim == 1 and bv.ndim == 2:
            _accum(a, g @ bv.T)
            _accum(b, np.outer(av, g))
        elif av.ndim == 2 and bv.ndim == 1:
            _accum(a, np.outer(g, bv))
            _accum(b, av.T @ g)
        elif av.ndim == 1 and bv.ndim == 1:
            _accum(a, g * bv)
            _accum(b, g * av)
        else:
            _accum(a, g @ bv.T)
            _accum(b, av.T @ g)

    out._backprop = backprop
    return out


def sparse_propagate(x, matrix, matrix_t) -> Tensor:
    """Apply a constant sparse matrix to a vector or to each row of a batch.

    `matrix_t` must be the transpose of `matrix` (both CSR); keeping both
    around avoids a transpose per call inside training loops.
    """
    x = _wrap(x)
    if x.value.ndim == 1:
        out_val = matrix @ x.value
    else:
        out_val = (matrix @ x.value.T).T
    out = Tensor(out_val, parents=(x,))

    def backprop(g):
        if g.ndim == 1:
            _accum(x, matrix_t @ g)
        else:
            _accum(x, (matrix_t @ g.T).T)

    out._backprop = backprop
    return out


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    v = x.value
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Tensor(s, parents=(x,))

    def backprop(g):
        _accum(x, g * s * (1.0 - s))

    out._backprop = backprop
    return out


def relu(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.maximum(x.value, 0.0), parents=(x,))

    def backprop(g):
        _accum(x, g * (x.value > 0))

    out._backprop = backprop
    return out


def log(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.log(x.value), parents=(x,))

    def backprop(g):
        _accum(x, g / x.value)

    out._backprop = backprop
    return out


def exp(x) -> Tensor:
    x = _wrap(x)
    ev = np.exp(x.value)
    out = Tensor(ev, parents=(x,))

    def backprop(g):
        _accum(x, g * ev)

    out._backprop = backprop
    return out


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to `b` (so max(x, 0) at 0 has grad 0)."""
    a, b = _wrap(a), _wrap(b)
    out = Tensor(np.maximum(a.value, b.value), parents=(a, b))

    def backprop(g):
        mask = a.value > b.value
        _accum(a, _unbroadcast(g * mask, a.value.shape))
        _accum(b, _unbroadcast(g * ~mask, b.value.shape))

    out._backprop = backprop
    return out


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through strictly inside (lo, hi) only."""
    x = _wrap(x)
    out = Tensor(np.clip(x.value, lo, hi), parents=(x,))

    def backprop(g):
        _accum(x, g * ((x.value > lo) & (x.value < hi)))

    out._backprop = backprop
    return out


# reductions and shape ops ---------------------------------------------


def reduce_sum(x, axis=None) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.value.sum(axis=axis), parents=(x,))

    def backprop(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.value.shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.value.shape).copy())

    out._backprop = backprop
    return out


def reduce_mean(x, axis=None) -> Tensor:
    x = _wrap(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(reduce_sum(x, axis=axis), 1.0 / n)


def reduce_max(x) -> Tensor:
    """Global max; the subgradient is one-hot at the first argmax."""
    x = _wrap(x)
    flat_idx = int(np.argmax(x.value))
    out = Tensor(x.value.ravel()[flat_idx], parents=(x,))

    def backprop(g):
        gx = np.zeros_like(x.value)
        gx.ravel()[flat_idx] = g
        _accum(x, gx)

    out._backprop = backprop
    return out


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.value[..., start:stop], parents=(x,))

    def backprop(g):
        gx = np.zeros_like(x.value)
        gx[..., start:stop] = g
        _accum(x, gx)

    out._backprop = backprop
    return out


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.value.reshape(shape), parents=(x,))

    def backprop(g):
        _accum(x, g.reshape(x.value.shape))

    out._backprop = backprop
    return out


def feature_matrix(columns) -> Tensor:
    """Stack same-shaped arrays into a flat (size, k) design matrix.

    Column j of the result is columns[j] flattened in C order; gradients
    scatter back to each source tensor.
    """
    cols = [_wrap(c) for c in columns]
    shape = cols[0].value.shape
    for c in cols:
        if c.value.shape != shape:
            raise ValueError("feature_matrix needs same-shaped columns")
    out_val = np.stack([c.value.ravel() for c in cols], axis=1)
    out = Tensor(out_val, parents=tuple(cols))

    def backprop(g):
        for j, c in enumerate(cols):
            _accum(c, g[:, j].reshape(shape))

    out._backprop = backprop
    return out


# stable composites -----------------------------------------------------


def log_sum_exp(v):
    """max(v) + log sum exp(v - max(v)); overflow-safe.

    Accepts a plain array (returns float) or a Tensor (returns a Tensor
    whose gradient is the softmax of v).
    """
    if isinstance(v, Tensor):
        if v.value.size == 0:
            raise ValueError("log_sum_exp of empty input")
        m = reduce_max(v)
        return add(m, log(reduce_sum(exp(v - m))))
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of empty input")
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))


# gradient utilities ----------------------------------------------------


def grad(loss_fn, wrt) -> list[np.ndarray]:
    """Gradients of the scalar built by loss_fn() w.r.t. the given leaves."""
    for t in wrt:
        t.grad = None
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise TypeError("loss_fn must return a Tensor")
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.value) for t in wrt]


def finite_diff_check(loss_fn, point: Tensor, step: float = 1e-5) -> float:
    """Worst per-coordinate relative error between tape and central differences.

    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator so
    near-zero coordinates compare absolutely.
    """
    analytic = grad(loss_fn, [point])[0].ravel()
    flat = point.value.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(loss_fn().value)
        flat[i] = orig - step
        f_minus = float(loss_fn().value)
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        denom = max(abs(analytic[i]), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
