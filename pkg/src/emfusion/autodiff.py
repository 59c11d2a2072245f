"""Minimal reverse-mode differentiation over numpy arrays.

Supports exactly the operator set the denoising network needs:
broadcasting arithmetic, matmul, reductions, shape ops, SiLU, softmax,
strided 2-D convolution, nearest-neighbour upsampling.  Everything is
float64.  Graphs are built eagerly; ``Tensor.backward()`` runs a single
reverse topological sweep and accumulates ``.grad`` on every tensor
created with ``requires_grad=True``.

Inside ``no_grad()`` no graph is recorded, which keeps sampling loops
allocation-light.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import EmfusionError

__all__ = [
    "Tensor",
    "UsageError",
    "no_grad",
    "as_tensor",
    "add",
    "mul",
    "matmul",
    "power",
    "exp",
    "reduce_sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "slice_axis",
    "silu",
    "softmax",
    "conv2d",
    "upsample_rows",
]


class UsageError(EmfusionError):
    """API misuse, e.g. asking a detached tensor for its gradient."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._grad = None
        self._parents = _parents
        self._vjp = _vjp

    # -- bookkeeping ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def grad(self) -> np.ndarray:
        if not self.requires_grad:
            raise UsageError("tensor is detached from the graph; no gradient is tracked")
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(as_tensor(other), -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other), power(self, -1.0))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    # -- reverse sweep ---------------------------------------------------
    def backward(self, seed: np.ndarray | None = None):
        """Accumulate gradients of ``self`` into every reachable leaf."""
        if seed is None:
            if self.data.size != 1:
                raise UsageError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:  # leaf
                node._grad = g if node._grad is None else node._grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, vjp) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _vjp=vjp)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------
def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make(out, (a, b), vjp)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = a.data**p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise UsageError("matmul operands must be at least 2-D")
    out = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(out, (a, b), vjp)


# -- reductions ---------------------------------------------------------
def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            shape = list(a.data.shape)
            for ax in axes:
                shape[ax] = 1
            g = g.reshape(shape)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(out, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(reduce_sum(a, axis, keepdims), as_tensor(1.0 / float(count)))


# -- shape ops ----------------------------------------------------------
def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), vjp)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _make(out, (a,), vjp)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), vjp)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = a.data[index]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(out, (a,), vjp)


# -- nonlinearities -----------------------------------------------------
def silu(a: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * sig

    def vjp(g):
        return (g * sig * (1.0 + a.data * (1.0 - sig)),)

    return _make(out, (a,), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (a,), vjp)


# -- structured ops -----------------------------------------------------
def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=(1, 1)) -> Tensor:
    """2-D convolution over (time, variate) with SAME padding, channels last.

    ``x``: (B, L, N, C_in); ``w``: (k_t, k_w, C_in, C_out); ``b``: (C_out,).
    Odd kernels only; output spatial size is ceil(size / stride).
    """
    st, sw = stride
    batch, length, width, c_in = x.data.shape
    kt, kw, c_in_w, c_out = w.data.shape
    if c_in_w != c_in:
        raise UsageError(f"conv2d channel mismatch: input {c_in}, kernel {c_in_w}")
    pt, pw = kt // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (pt, pt), (pw, pw), (0, 0)))
    lo = (length + 2 * pt - kt) // st + 1
    no = (width + 2 * pw - kw) // sw + 1

    def tap(i, j):
        return xp[:, i : i + st * lo : st, j : j + sw * no : sw, :]

    # accumulate one skinny GEMM per kernel tap: far cheaper than an
    # im2col gather for the narrow variate axes seen here
    out = np.broadcast_to(b.data, (batch, lo, no, c_out)).copy()
    for i in range(kt):
        for j in range(kw):
            out += tap(i, j) @ w.data[i, j]

    def vjp(g):
        g2 = g.reshape(batch * lo * no, c_out)
        gb = g2.sum(axis=0)
        gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp)
        for i in range(kt):
            for j in range(kw):
                cols = np.ascontiguousarray(tap(i, j)).reshape(batch * lo * no, c_in)
                gw[i, j] = cols.T @ g2
                gxp[:, i : i + st * lo : st, j : j + sw * no : sw, :] += g @ w.data[i, j].T
        return gxp[:, pt : pt + length, pw : pw + width, :], gw, gb

    return _make(out, (x, w, b), vjp)


def upsample_rows(x: Tensor) -> Tensor:
    """Nearest-neighbour x2 along the time axis of (B, L, N, C)."""
    out = np.repeat(x.data, 2, axis=1)
    batch, length, width, chan = x.data.shape

    def vjp(g):
        return (g.reshape(batch, length, 2, width, chan).sum(axis=2),)

    return _make(out, (x,), vjp)
