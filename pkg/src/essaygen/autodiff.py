"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a float64 ndarray.  Operations executed while a Tape is
active record backward closures; Tape.backward replays them in reverse
order and accumulates gradients into every tensor that requires them.
Outside a Tape context the same operations run as plain numpy, which is
what finite-difference checks and inference use.
"""

from __future__ import annotations

import numpy as np

_ACTIVE_TAPE = None

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed primitives for one forward pass."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def record(self, backward_fn):
        self._nodes.append(backward_fn)

    def backward(self, loss):
        """Seed d(loss)/d(loss)=1 and replay the tape in reverse."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._nodes):
            fn()


def _record(out, inputs, backward_fn):
    """Attach a backward closure if a tape is active and grads can flow."""
    tape = _ACTIVE_TAPE
    if tape is None:
        return
    if not any(t.requires_grad for t in inputs):
        return
    out.requires_grad = True

    def node():
        if out.grad is not None:
            backward_fn(out.grad)

    tape.record(node)


def _unbroadcast(g, shape):
    """Sum gradient g down to the given (possibly broadcast) input shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x, name=None):
    return Tensor(x, requires_grad=False, name=name)


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    _record(out, (a, b), backward)
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))

    _record(out, (a, b), backward)
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    _record(out, (a, b), backward)
    return out


def scale(a, c):
    a = as_tensor(a)
    out = Tensor(a.data * c)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * c)

    _record(out, (a,), backward)
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    _record(out, (a, b), backward)
    return out


def transpose(a):
    a = as_tensor(a)
    out = Tensor(a.data.T)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g.T)

    _record(out, (a,), backward)
    return out


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.shape))

    _record(out, (a,), backward)
    return out


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if a.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate(np.broadcast_to(g, a.shape).copy())

    _record(out, (a,), backward)
    return out


def tmean(a):
    return scale(tsum(a), 1.0 / a.data.size)


def exp(a):
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * out.data)

    _record(out, (a,), backward)
    return out


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.data))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g / a.data)

    _record(out, (a,), backward)
    return out


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * (a.data > 0.0))

    _record(out, (a,), backward)
    return out


def sigmoid(a):
    a = as_tensor(a)
    out = Tensor(1.0 / (1.0 + np.exp(-a.data)))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * out.data * (1.0 - out.data))

    _record(out, (a,), backward)
    return out


def softmax(a, axis=-1):
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise FloatingPointError("softmax input contains non-finite values")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)

    def backward(g):
        if a.requires_grad:
            dot = (g * p).sum(axis=axis, keepdims=True)
            a.accumulate(p * (g - dot))

    _record(out, (a,), backward)
    return out


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse)

    def backward(g):
        if a.requires_grad:
            p = np.exp(out.data)
            a.accumulate(g - p * g.sum(axis=axis, keepdims=True))

    _record(out, (a,), backward)
    return out


LAYER_NORM_EPS = 1e-5


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalize each row of x to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = Tensor(xn * gain.data + bias.data)

    def backward(g):
        n = x.shape[-1]
        if gain.requires_grad:
            gain.accumulate(_unbroadcast(g * xn, gain.shape))
        if bias.requires_grad:
            bias.accumulate(_unbroadcast(g, bias.shape))
        if x.requires_grad:
            gx = g * gain.data
            # d/dx of (x - mu) * inv with mu, inv functions of x
            s1 = gx.sum(axis=-1, keepdims=True)
            s2 = (gx * xn).sum(axis=-1, keepdims=True)
            x.accumulate(inv * (gx - s1 / n - xn * s2 / n))

    _record(out, (x, gain, bias), backward)
    return out


def affine(x, w, b):
    """x @ w + b in one primitive; b broadcasts over rows."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine inner dimensions disagree: {x.shape} vs {w.shape}")
    out = Tensor(x.data @ w.data + b.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            w.accumulate(x.data.T @ g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=0))

    _record(out, (x, w, b), backward)
    return out


def attention(q, k, v, num_heads, mask=None, scale=1.0):
    """Fused multi-head scaled dot-product attention over projected q/k/v.

    q: (Lq, d), k and v: (Lk, d); heads are contiguous column blocks.
    `mask` is an additive (Lq, Lk) array; output is (Lq, d) with heads
    re-concatenated.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    lq, d = q.shape
    lk = k.shape[0]
    dh = d // num_heads
    q3 = q.data.reshape(lq, num_heads, dh).transpose(1, 0, 2)
    k3 = k.data.reshape(lk, num_heads, dh).transpose(1, 0, 2)
    v3 = v.data.reshape(lk, num_heads, dh).transpose(1, 0, 2)
    scores = scale * (q3 @ k3.transpose(0, 2, 1))
    if mask is not None:
        scores = scores + mask
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    a = e / e.sum(axis=-1, keepdims=True)          # (H, Lq, Lk)
    out = Tensor((a @ v3).transpose(1, 0, 2).reshape(lq, d))

    def backward(g):
        g3 = g.reshape(lq, num_heads, dh).transpose(1, 0, 2)
        if v.requires_grad:
            dv = a.transpose(0, 2, 1) @ g3
            v.accumulate(dv.transpose(1, 0, 2).reshape(lk, d))
        if q.requires_grad or k.requires_grad:
            da = g3 @ v3.transpose(0, 2, 1)
            ds = a * (da - (da * a).sum(axis=-1, keepdims=True))
            if q.requires_grad:
                dq = scale * (ds @ k3)
                q.accumulate(dq.transpose(1, 0, 2).reshape(lq, d))
            if k.requires_grad:
                dk = scale * (ds.transpose(0, 2, 1) @ q3)
                k.accumulate(dk.transpose(1, 0, 2).reshape(lk, d))

    _record(out, (q, k, v), backward)
    return out


def gather_rows(table, ids):
    """Embedding lookup: rows of `table` selected by integer array `ids`."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row index out of range for table with {table.shape[0]} rows")
    out = Tensor(table.data[ids])

    def backward(g):
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, ids, g)
            table.accumulate(acc)

    _record(out, (table,), backward)
    return out


def slice_cols(a, start, stop):
    a = as_tensor(a)
    out = Tensor(a.data[..., start:stop])

    def backward(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            acc[..., start:stop] = g
            a.accumulate(acc)

    _record(out, (a,), backward)
    return out


def concat_cols(parts):
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))

    def backward(g):
        off = 0
        for p in parts:
            w = p.shape[-1]
            if p.requires_grad:
                p.accumulate(g[..., off:off + w])
            off += w

    _record(out, tuple(parts), backward)
    return out


def concat_rows(parts):
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))

    def backward(g):
        off = 0
        for p in parts:
            h = p.shape[0]
            if p.requires_grad:
                p.accumulate(g[off:off + h])
            off += h

    _record(out, tuple(parts), backward)
    return out


def backward(loss, tape):
    """Compute gradients of a scalar `loss` through `tape`."""
    tape.backward(loss)
