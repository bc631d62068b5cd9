"""Frozen general-purpose language model backing the decoder's fused
embeddings.

At desk scale this is a small in-repo causal transformer rather than an
external pretrained checkpoint; the contract is only that it exposes
frozen causal hidden states for a token prefix plus a parameter
fingerprint so freezing can be verified bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers as L


@dataclass
class ProviderConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 128
    max_len: int = 160

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")


class FrozenCausalLM:
    """Small causal transformer exposing contextual hidden states.

    Trainable until freeze() is called; afterwards parameters are
    immutable and the fingerprint is constant.
    """

    def __init__(self, config, seed=0):
        self.config = config
        self.frozen = False
        self._fingerprint = None
        self._cache = {}          # frozen hidden states are pure in the prefix
        rng = np.random.default_rng(seed)
        p = {}
        c = config
        p["embed"] = L.param(rng, (c.vocab_size, c.hidden_dim), "embed")
        for i in range(c.num_layers):
            L.init_attention(p, rng, f"l{i}.attn", c.hidden_dim, c.hidden_dim)
            L.init_norm(p, f"l{i}.norm1", c.hidden_dim)
            L.init_ffn(p, rng, f"l{i}.ffn", c.hidden_dim, c.ffn_dim)
            L.init_norm(p, f"l{i}.norm2", c.hidden_dim)
        p["out.w"] = L.param(rng, (c.hidden_dim, c.vocab_size), "out.w")
        p["out.b"] = L.zeros_param((c.vocab_size,), "out.b")
        self.params = p
        self.positions = L.sinusoidal_positions(c.max_len, c.hidden_dim)

    @property
    def hidden_dim(self):
        return self.config.hidden_dim

    def forward_hidden(self, ids):
        """Causal hidden states as a Tensor, (len(ids), hidden_dim)."""
        ids = np.asarray(ids, dtype=np.int64)
        p = self.params
        x = ad.add(ad.gather_rows(p["embed"], ids), ad.constant(self.positions[:len(ids)]))
        mask = L.causal_mask(len(ids))
        for i in range(self.config.num_layers):
            attn = L.multi_head_attention(x, x, p, f"l{i}.attn", self.config.num_heads, mask=mask)
            x = L.add_norm(x, attn, p, f"l{i}.norm1")
            x = L.add_norm(x, L.feed_forward(x, p, f"l{i}.ffn"), p, f"l{i}.norm2")
        return x

    def logits(self, ids):
        return L.linear(self.forward_hidden(ids), self.params["out.w"], self.params["out.b"])

    def hidden_states(self, ids):
        """Detached hidden states for a prefix.

        Safe inside an active tape once frozen: no parameter requires a
        gradient, so nothing is recorded.
        """
        if not self.frozen and ad._ACTIVE_TAPE is not None:
            raise RuntimeError("freeze the provider before using it under a tape")
        if not self.frozen:
            return self.forward_hidden(ids).data
        key = bytes(np.asarray(ids, dtype=np.int64))
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self.forward_hidden(ids).data
        return hit

    def trainable(self):
        return {} if self.frozen else self.params

    def freeze(self):
        for t in self.params.values():
            t.requires_grad = False
            t.grad = None
        self._cache = {}
        self.frozen = True
        self._fingerprint = self.fingerprint()

    def fingerprint(self):
        """sha256 over parameter names and raw bytes, in name order."""
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name].data).tobytes())
        return h.hexdigest()

    def state_arrays(self):
        return {name: t.data for name, t in self.params.items()}

    @classmethod
    def from_arrays(cls, config, arrays):
        lm = cls(config, seed=0)
        for name, arr in arrays.items():
            lm.params[name].data = np.array(arr, dtype=ad.DEFAULT_DTYPE)
        lm.freeze()
        return lm
