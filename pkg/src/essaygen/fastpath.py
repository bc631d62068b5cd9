"""Tape-free numpy re-implementation of the training loss.

This is a deliberately independent mirror of the model forward, used by
the finite-difference gradient oracle (where per-op tape overhead would
dominate) and pinned against the tape path to 1e-12 in the test suite.

FastLoss captures references to the parameter arrays once; finite
differencing perturbs those arrays in place, so a single instance stays
valid across a whole sweep.
"""

from __future__ import annotations

import numpy as np

from .layers import causal_mask
from .model import _log_smoothed_rows


def _ln(x, g, b, eps=1e-5):
    n = x.shape[-1]
    mu = x.sum(axis=-1, keepdims=True) / n
    xc = x - mu
    var = (xc * xc).sum(axis=-1, keepdims=True) / n
    return xc / np.sqrt(var + eps) * g + b


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class FastLoss:
    def __init__(self, model):
        c = model.config
        self.c = c
        self.model = model
        self.positions = model.positions
        a = {k: t.data for k, t in model.params.items()}
        self.enc_embed = a["enc.embed"]
        self.enc_layers = [
            (self._attn_arrays(a, f"enc.l{i}.attn"),
             (a[f"enc.l{i}.norm1.g"], a[f"enc.l{i}.norm1.b"]),
             (a[f"enc.l{i}.te.wq"], a[f"enc.l{i}.te.wk"], a[f"enc.l{i}.te.wv"],
              a[f"enc.l{i}.te_norm.g"], a[f"enc.l{i}.te_norm.b"])
             if c.uses_topic_extension else None,
             self._ffn_arrays(a, f"enc.l{i}.ffn"),
             (a[f"enc.l{i}.norm2.g"], a[f"enc.l{i}.norm2.b"]))
            for i in range(c.num_layers)
        ]
        self.dec_layers = [
            (self._attn_arrays(a, f"dec.l{i}.self"),
             (a[f"dec.l{i}.self_norm.g"], a[f"dec.l{i}.self_norm.b"]),
             self._attn_arrays(a, f"dec.l{i}.cross"),
             (a[f"dec.l{i}.cross_norm.g"], a[f"dec.l{i}.cross_norm.b"]),
             self._ffn_arrays(a, f"dec.l{i}.ffn"),
             (a[f"dec.l{i}.ffn_norm.g"], a[f"dec.l{i}.ffn_norm.b"]))
            for i in range(c.num_layers)
        ]
        if c.uses_embedding_fusion:
            self.fuse = (a["fuse.w_lm"], a["fuse.finder"], a["fuse.w_up"], a["fuse.v"])
            self.dec_embed = None
        else:
            self.fuse = None
            self.dec_embed = a["dec.embed"]
        self.out = (a["out.w"], a["out.b"])
        self.logq = _log_smoothed_rows(c.vocab_size, c.label_smoothing_eps)

    @staticmethod
    def _attn_arrays(a, prefix):
        return tuple(a[f"{prefix}.{n}"] for n in
                     ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"))

    @staticmethod
    def _ffn_arrays(a, prefix):
        return tuple(a[f"{prefix}.{n}"] for n in ("w1", "b1", "w2", "b2"))

    def _mha(self, x_q, x_kv, w, mask=None):
        wq, bq, wk, bk, wv, bv, wo, bo = w
        heads = self.c.num_heads
        q = x_q @ wq + bq
        k = x_kv @ wk + bk
        v = x_kv @ wv + bv
        lq, d = q.shape
        dh = d // heads
        q3 = q.reshape(lq, heads, dh).transpose(1, 0, 2)
        k3 = k.reshape(-1, heads, dh).transpose(1, 0, 2)
        v3 = v.reshape(-1, heads, dh).transpose(1, 0, 2)
        s = (q3 @ k3.transpose(0, 2, 1)) / np.sqrt(dh)
        if mask is not None:
            s = s + mask
        ctx = (_softmax(s) @ v3).transpose(1, 0, 2).reshape(lq, d)
        return ctx @ wo + bo

    @staticmethod
    def _ffn(x, w):
        w1, b1, w2, b2 = w
        return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2

    def encode(self, topic_ids, contexts):
        c = self.c
        x = self.enc_embed[topic_ids]
        for attn, norm1, te, ffn, norm2 in self.enc_layers:
            h = _ln(x + self._mha(x, x, attn), *norm1)
            if te is not None:
                wq, wk, wv, g, b = te
                q = h @ wq
                rows = []
                for j, kw_ids in enumerate(contexts):
                    e = self.enc_embed[kw_ids]
                    scores = (e @ wk) @ q[j]
                    if c.scale_keyword_attention:
                        scores = scores / np.sqrt(c.hidden_dim)
                    alpha = np.exp(scores - scores.max())
                    rows.append((alpha / alpha.sum()) @ (e @ wv))
                h = _ln(h + np.stack(rows), g, b)
            x = _ln(h + self._ffn(h, ffn), *norm2)
        return x

    def embeddings(self, ids):
        if self.fuse is None:
            return self.dec_embed[ids]
        w_lm, finder, w_up, v = self.fuse
        e_g = self.model.provider.hidden_states(ids) @ w_lm
        e_d = finder[ids] @ w_up
        gate = 1.0 / (1.0 + np.exp(-(np.concatenate([e_g, e_d], axis=1) @ v)))
        return gate * e_g + (1.0 - gate) * e_d

    def logits(self, memory, ids):
        x = self.embeddings(ids) + self.positions[:len(ids)]
        mask = causal_mask(len(ids))
        for self_a, self_n, cross_a, cross_n, ffn, ffn_n in self.dec_layers:
            x = _ln(x + self._mha(x, x, self_a, mask=mask), *self_n)
            x = _ln(x + self._mha(x, memory, cross_a), *cross_n)
            x = _ln(x + self._ffn(x, ffn), *ffn_n)
        return x @ self.out[0] + self.out[1]

    def compile_batch(self, batch, psi):
        """Hoist batch-invariant prep; returns a zero-argument loss callable."""
        c = self.c
        rows = []
        tokens = 0
        for r in range(batch.topics.shape[0]):
            topics = batch.topics[r][batch.topic_mask[r] == 1]
            contexts = [np.asarray(psi.keywords_for(int(t))[: c.k_contexts]) for t in topics]
            steps = int(batch.target_mask[r].sum())
            rows.append((topics, contexts, batch.dec_input[r, :steps],
                         self.logq[batch.target[r, :steps]]))
            tokens += steps
        model_to_target = c.kl_direction == "model_to_target"

        def loss():
            total = 0.0
            for topics, contexts, dec_in, logq in rows:
                memory = self.encode(topics, contexts)
                logits = self.logits(memory, dec_in)
                shifted = logits - logits.max(axis=-1, keepdims=True)
                logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
                if model_to_target:
                    total += float((np.exp(logp) * (logp - logq)).sum())
                else:
                    q = np.exp(logq)
                    total += float((q * (logq - logp)).sum())
            return total / tokens

        return loss

    def __call__(self, batch, psi):
        """Mean per-token divergence; mirrors TopicEssayModel.forward_loss."""
        return self.compile_batch(batch, psi)()


def batch_loss(model, batch, psi):
    return FastLoss(model)(batch, psi)
