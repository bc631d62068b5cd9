"""Transformer building blocks shared by the main network and the frozen
language-model provider, built on the autodiff primitives."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad

NEG_INF = -1e9


def xavier(rng, shape):
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def param(rng, shape, name):
    return ad.Tensor(xavier(rng, shape), requires_grad=True, name=name)


def zeros_param(shape, name):
    return ad.Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones_param(shape, name):
    return ad.Tensor(np.ones(shape), requires_grad=True, name=name)


def sinusoidal_positions(max_len, dim):
    """Fixed sine/cosine position table, (max_len, dim)."""
    pos = np.arange(max_len)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.zeros((max_len, dim))
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def causal_mask(n):
    """(n, n) additive mask blocking attention to future positions."""
    return np.triu(np.full((n, n), NEG_INF), k=1)


def linear(x, w, b=None):
    return ad.matmul(x, w) if b is None else ad.affine(x, w, b)


def multi_head_attention(x_q, x_kv, p, prefix, num_heads, mask=None):
    """Scaled dot-product attention; weights live in p under `prefix`."""
    q = linear(x_q, p[f"{prefix}.wq"], p[f"{prefix}.bq"])
    k = linear(x_kv, p[f"{prefix}.wk"], p[f"{prefix}.bk"])
    v = linear(x_kv, p[f"{prefix}.wv"], p[f"{prefix}.bv"])
    dh = q.shape[-1] // num_heads
    ctx = ad.attention(q, k, v, num_heads, mask=mask, scale=1.0 / math.sqrt(dh))
    return linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def feed_forward(x, p, prefix):
    hidden = ad.relu(linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    return linear(hidden, p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def add_norm(x, sub, p, prefix):
    return ad.layer_norm(ad.add(x, sub), p[f"{prefix}.g"], p[f"{prefix}.b"])


def init_attention(p, rng, prefix, d_in, d_model):
    for w, fan_in in (("wq", d_in), ("wk", d_in), ("wv", d_in)):
        p[f"{prefix}.{w}"] = param(rng, (d_in, d_model), f"{prefix}.{w}")
    p[f"{prefix}.wo"] = param(rng, (d_model, d_model), f"{prefix}.wo")
    for b in ("bq", "bk", "bv", "bo"):
        p[f"{prefix}.{b}"] = zeros_param((d_model,), f"{prefix}.{b}")


def init_ffn(p, rng, prefix, d_model, d_ff):
    p[f"{prefix}.w1"] = param(rng, (d_model, d_ff), f"{prefix}.w1")
    p[f"{prefix}.b1"] = zeros_param((d_ff,), f"{prefix}.b1")
    p[f"{prefix}.w2"] = param(rng, (d_ff, d_model), f"{prefix}.w2")
    p[f"{prefix}.b2"] = zeros_param((d_model,), f"{prefix}.b2")


def init_norm(p, prefix, d_model):
    p[f"{prefix}.g"] = ones_param((d_model,), f"{prefix}.g")
    p[f"{prefix}.b"] = zeros_param((d_model,), f"{prefix}.b")
