"""Reverse-mode differentiation over numpy arrays.

Only the primitives the ETPP network needs are provided. Every op accepts an
optional leading batch shape so a whole set of events can be pushed through
one graph; the math per event is unaffected by the batching.

Usage::

    with Tape() as tape:
        w = tape.watch(w0, "w")
        loss = masked_sse(dense(w, x, b), target, mask)
    tape.backward(loss)
    grads = tape.gradients()
"""
from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not agree."""


_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed ops.

    Nodes are appended as ops run, so the list is already in topological
    order and the backward sweep is a single reversed pass.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: dict[str, Tensor] = {}

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def watch(self, value, name: str) -> Tensor:
        if name in self.leaves:
            raise KeyError(f"leaf {name!r} already registered")
        leaf = Tensor(value, requires_grad=True, name=name)
        self.leaves[name] = leaf
        return leaf

    def backward(self, output: Tensor):
        if output.data.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
        for node in self.nodes:
            node.grad = None
        for leaf in self.leaves.values():
            leaf.grad = None
        output.grad = np.ones_like(output.data)
        for node in reversed(self.nodes):
            if node.grad is not None:
                node._backward(node.grad)

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            name: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            for name, leaf in self.leaves.items()
        }


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, backward):
    out = Tensor(data)
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        _ACTIVE[-1].nodes.append(out)
    return out


def _accum(t: Tensor, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _record(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _record(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _record(a.data * b.data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0

    def backward(g):
        _accum(x, g * on)

    return _record(np.where(on, x.data, 0.0), (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    return _record(y, (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        _accum(x, g * y * (1.0 - y))

    return _record(y, (x,), backward)


# -- linear maps ------------------------------------------------------------

def dense(W, x, b=None) -> Tensor:
    """``W @ x + b`` applied over the last axis of ``x``.

    W is (out, in); x is (..., in); b is (out,) or None.
    """
    W, x = as_tensor(W), as_tensor(x)
    if W.ndim != 2:
        raise ShapeError(f"dense: weight must be 2-D, got shape {W.shape}")
    n_out, n_in = W.shape
    if x.ndim < 1 or x.shape[-1] != n_in:
        raise ShapeError(f"dense: input dimension {x.shape[-1] if x.ndim else None} != weight in-dimension {n_in}")
    parents = (W, x)
    out = x.data @ W.data.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (n_out,):
            raise ShapeError(f"dense: bias length {b.shape} != weight out-dimension {n_out}")
        out = out + b.data
        parents = (W, x, b)

    def backward(g):
        g2 = g.reshape(-1, n_out)
        if W.requires_grad:
            _accum(W, g2.T @ x.data.reshape(-1, n_in))
        if x.requires_grad:
            _accum(x, g @ W.data)
        if b is not None and b.requires_grad:
            _accum(b, g2.sum(axis=0))

    return _record(out, parents, backward)


def matmul(a, M) -> Tensor:
    """``a @ M`` with a of shape (..., k) and a 2-D right operand (k, p)."""
    a, M = as_tensor(a), as_tensor(M)
    if M.ndim != 2:
        raise ShapeError(f"matmul: right operand must be 2-D, got shape {M.shape}")
    k, p = M.shape
    if a.ndim < 1 or a.shape[-1] != k:
        raise ShapeError(f"matmul: inner dimension {a.shape[-1] if a.ndim else None} != {k}")

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ M.data.T)
        if M.requires_grad:
            _accum(M, a.data.reshape(-1, k).T @ g.reshape(-1, p))

    return _record(a.data @ M.data, (a, M), backward)


def same_padding(k: int) -> tuple[int, int]:
    """Zero padding (before, after) that keeps the output size equal to the input."""
    return math.ceil((k - 1) / 2), (k - 1) // 2


def conv2d(x, kernels, bias) -> Tensor:
    """Same-size 2-D cross-correlation.

    x: (..., rows, cols, in_ch); kernels: (kh, kw, in_ch, out_ch); bias: (out_ch,).
    Even kernel sizes pad one extra zero before rather than after.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d: kernels must be (kh, kw, in_ch, out_ch), got shape {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    if x.ndim < 3:
        raise ShapeError(f"conv2d: input must be (..., rows, cols, in_ch), got shape {x.shape}")
    rows, cols, xc = x.shape[-3:]
    if xc != cin:
        raise ShapeError(f"conv2d: input channels {xc} != kernel in_channels {cin}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias length {bias.shape} != kernel out_channels {cout}")
    top, bottom = same_padding(kh)
    left, right = same_padding(kw)
    if kh > rows + top + bottom:
        raise ShapeError(f"conv2d: kernel rows {kh} exceed padded input rows {rows + top + bottom}")
    if kw > cols + left + right:
        raise ShapeError(f"conv2d: kernel cols {kw} exceed padded input cols {cols + left + right}")

    lead = [(0, 0)] * (x.ndim - 3)
    xp = np.pad(x.data, lead + [(top, bottom), (left, right), (0, 0)])
    K = kernels.data
    out = np.zeros(x.shape[:-1] + (cout,))
    for di in range(kh):
        for dj in range(kw):
            out += xp[..., di:di + rows, dj:dj + cols, :] @ K[di, dj]
    out += bias.data

    def backward(g):
        g2 = g.reshape(-1, cout)
        if kernels.requires_grad:
            gK = np.empty_like(K)
            for di in range(kh):
                for dj in range(kw):
                    patch = xp[..., di:di + rows, dj:dj + cols, :].reshape(-1, cin)
                    gK[di, dj] = patch.T @ g2
            _accum(kernels, gK)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[..., di:di + rows, dj:dj + cols, :] += g @ K[di, dj].T
            _accum(x, gxp[..., top:top + rows, left:left + cols, :])
        if bias.requires_grad:
            _accum(bias, g2.sum(axis=0))

    return _record(out, (x, kernels, bias), backward)


# -- shape plumbing ---------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def backward(g):
        _accum(x, g.reshape(src))

    return _record(x.data.reshape(shape), (x,), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)

    def backward(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    return _record(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def select(x, index: int, axis: int) -> Tensor:
    """Take one slice along ``axis`` (the axis is dropped)."""
    x = as_tensor(x)
    axis = axis % x.ndim

    def backward(g):
        full = np.zeros_like(x.data)
        sl = [slice(None)] * x.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        _accum(x, full)

    return _record(np.take(x.data, index, axis=axis), (x,), backward)


def mean(x, axis) -> Tensor:
    x = as_tensor(x)
    axis = axis % x.ndim
    size = x.shape[axis]

    def backward(g):
        _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.shape) / size)

    return _record(x.data.mean(axis=axis), (x,), backward)


def total(x, axis=None) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.shape))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.shape))

    return _record(x.data.sum(axis=axis), (x,), backward)


# -- loss -------------------------------------------------------------------

def masked_sse(pred, target, mask) -> Tensor:
    """Sum of squared errors over entries where ``mask`` is 1.

    Values of ``pred`` and ``target`` at masked-out positions never reach the
    result or the gradient, even when they are NaN.
    """
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    mask = np.asarray(mask.data if isinstance(mask, Tensor) else mask)
    if pred.shape != target.shape:
        raise ShapeError(f"masked_sse: pred shape {pred.shape} != target shape {target.shape}")
    if mask.shape != pred.shape:
        raise ShapeError(f"masked_sse: mask shape {mask.shape} != pred shape {pred.shape}")
    on = mask.astype(bool)
    if not np.array_equal(on, mask):
        raise ValueError("masked_sse: mask values must be 0 or 1")
    resid = np.where(on, target - np.where(on, pred.data, 0.0), 0.0)

    def backward(g):
        _accum(pred, -2.0 * g * resid)

    return _record(np.asarray(np.sum(resid * resid)), (pred,), backward)
