"""Topic-to-essay network.

Encoder: transformer over the topic set (no positional encodings), with a
keyword-context cross-attention sublayer between self-attention and the
FFN in every layer.  Each topic attends over the input embeddings of its
precomputed context keywords; the attended sum is added and normalized
back into the topic representation.

Decoder: standard causal transformer over essay prefixes whose input
embeddings are, in the fused variants, a sigmoid-gated convex combination
of a frozen general-LM contextual embedding and a learnable domain
(lookup-table) embedding.

Variants: "full" (both extensions), "te_only" (keyword attention only),
"ef_only" (fused embeddings only), "vanilla" (neither).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import layers as L

VARIANTS = ("full", "te_only", "ef_only", "vanilla")


@dataclass
class ModelConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    finder_dim: int = 16
    k_contexts: int = 8
    max_len: int = 150
    label_smoothing_eps: float = 0.1
    variant: str = "full"
    lm_dim: int = 64
    # keyword attention follows the unscaled dot-product formulation;
    # scaling by 1/sqrt(d) is available for experimentation
    scale_keyword_attention: bool = False
    # "model_to_target" divergence as formulated; "target_to_model" is the
    # conventional label-smoothing direction
    kl_direction: str = "model_to_target"

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.finder_dim < 1 or self.max_len < 1:
            raise ValueError("finder_dim and max_len must be >= 1")
        if self.kl_direction not in ("model_to_target", "target_to_model"):
            raise ValueError(f"unknown kl_direction {self.kl_direction!r}")

    @property
    def uses_topic_extension(self):
        return self.variant in ("full", "te_only")

    @property
    def uses_embedding_fusion(self):
        return self.variant in ("full", "ef_only")

    def to_dict(self):
        return dict(self.__dict__)


class InferenceError(RuntimeError):
    pass


def smoothed_target_row(target_id, vocab_size, eps):
    """Near-one-hot distribution reserving eps mass across the vocabulary."""
    row = np.full(vocab_size, eps / vocab_size)
    row[target_id] += 1.0 - eps
    return row


@lru_cache(maxsize=64)
def _log_smoothed_rows(vocab_size, eps):
    """log LS(t) stacked for every target id t, (V, V)."""
    return np.log(np.stack([smoothed_target_row(t, vocab_size, eps)
                            for t in range(vocab_size)]))


class TopicEssayModel:
    def __init__(self, config, provider=None, seed=0):
        if config.uses_embedding_fusion and provider is None:
            raise ValueError("fused variants need a frozen LM provider")
        if provider is not None and provider.hidden_dim != config.lm_dim:
            raise ValueError("provider hidden_dim disagrees with config.lm_dim")
        self.config = config
        self.provider = provider
        rng = np.random.default_rng(seed)
        c = config
        d = c.hidden_dim
        p = {}
        p["enc.embed"] = L.param(rng, (c.vocab_size, d), "enc.embed")
        for i in range(c.num_layers):
            L.init_attention(p, rng, f"enc.l{i}.attn", d, d)
            L.init_norm(p, f"enc.l{i}.norm1", d)
            if c.uses_topic_extension:
                # queries from topic hidden states, keys/values from the
                # keyword input embeddings; bias-free as formulated
                p[f"enc.l{i}.te.wq"] = L.param(rng, (d, d), f"enc.l{i}.te.wq")
                p[f"enc.l{i}.te.wk"] = L.param(rng, (d, d), f"enc.l{i}.te.wk")
                p[f"enc.l{i}.te.wv"] = L.param(rng, (d, d), f"enc.l{i}.te.wv")
                L.init_norm(p, f"enc.l{i}.te_norm", d)
            L.init_ffn(p, rng, f"enc.l{i}.ffn", d, c.ffn_dim)
            L.init_norm(p, f"enc.l{i}.norm2", d)
        if c.uses_embedding_fusion:
            p["fuse.w_lm"] = L.param(rng, (c.lm_dim, d), "fuse.w_lm")
            p["fuse.finder"] = L.param(rng, (c.vocab_size, c.finder_dim), "fuse.finder")
            p["fuse.w_up"] = L.param(rng, (c.finder_dim, d), "fuse.w_up")
            p["fuse.v"] = L.param(rng, (2 * d, 1), "fuse.v")
        else:
            p["dec.embed"] = L.param(rng, (c.vocab_size, d), "dec.embed")
        for i in range(c.num_layers):
            L.init_attention(p, rng, f"dec.l{i}.self", d, d)
            L.init_norm(p, f"dec.l{i}.self_norm", d)
            L.init_attention(p, rng, f"dec.l{i}.cross", d, d)
            L.init_norm(p, f"dec.l{i}.cross_norm", d)
            L.init_ffn(p, rng, f"dec.l{i}.ffn", d, c.ffn_dim)
            L.init_norm(p, f"dec.l{i}.ffn_norm", d)
        p["out.w"] = L.param(rng, (d, c.vocab_size), "out.w")
        p["out.b"] = L.zeros_param((c.vocab_size,), "out.b")
        self.params = p
        self.positions = L.sinusoidal_positions(c.max_len + 1, d)

    # ------------------------------------------------------------------
    # encoder

    def encode(self, topic_ids, psi, collect_attn=None):
        """Per-topic contextual embeddings, (N, hidden_dim).

        Topic order carries no positional signal.  `collect_attn`, if a
        list, receives one (layer, topic, weights) record per keyword-
        attention softmax.
        """
        c = self.config
        p = self.params
        topic_ids = [int(t) for t in topic_ids]
        for t in topic_ids:
            if not 0 <= t < c.vocab_size:
                raise InferenceError(f"topic id {t} outside the vocabulary")
        x = ad.gather_rows(p["enc.embed"], np.asarray(topic_ids, dtype=np.int64))
        contexts = [psi.keywords_for(t)[: c.k_contexts] for t in topic_ids]
        for i in range(c.num_layers):
            attn = L.multi_head_attention(x, x, p, f"enc.l{i}.attn", c.num_heads)
            h = L.add_norm(x, attn, p, f"enc.l{i}.norm1")
            if c.uses_topic_extension:
                h = self._topic_extension(h, contexts, i, collect_attn)
            x = L.add_norm(h, L.feed_forward(h, p, f"enc.l{i}.ffn"), p, f"enc.l{i}.norm2")
        return x

    def _topic_extension(self, h, contexts, layer, collect_attn):
        c = self.config
        p = self.params
        q = ad.matmul(h, p[f"enc.l{layer}.te.wq"])
        rows = []
        for i, kw_ids in enumerate(contexts):
            e = ad.gather_rows(p["enc.embed"], np.asarray(kw_ids, dtype=np.int64))
            k = ad.matmul(e, p[f"enc.l{layer}.te.wk"])
            v = ad.matmul(e, p[f"enc.l{layer}.te.wv"])
            qi = ad.slice_cols(ad.transpose(q), i, i + 1)   # (d, 1)
            scores = ad.transpose(ad.matmul(k, qi))          # (1, k)
            if c.scale_keyword_attention:
                scores = ad.scale(scores, 1.0 / math.sqrt(c.hidden_dim))
            alpha = ad.softmax(scores, axis=-1)
            if collect_attn is not None:
                collect_attn.append((layer, i, alpha.data.ravel().copy()))
            rows.append(ad.matmul(alpha, v))                 # (1, d)
        ctx = rows[0] if len(rows) == 1 else ad.concat_rows(rows)
        return ad.layer_norm(ad.add(h, ctx),
                             p[f"enc.l{layer}.te_norm.g"], p[f"enc.l{layer}.te_norm.b"])

    # ------------------------------------------------------------------
    # decoder

    def fuse_embeddings(self, prefix_ids, collect_gates=None):
        """Input embeddings for an essay prefix, (L, hidden_dim)."""
        c = self.config
        p = self.params
        ids = np.asarray(prefix_ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("prefix must contain at least the start token")
        if ids.min() < 0 or ids.max() >= c.vocab_size:
            raise IndexError("token id outside the vocabulary")
        if not c.uses_embedding_fusion:
            return ad.gather_rows(p["dec.embed"], ids)
        lm_hidden = ad.constant(self.provider.hidden_states(ids))
        e_g = ad.matmul(lm_hidden, p["fuse.w_lm"])
        e_d = ad.matmul(ad.gather_rows(p["fuse.finder"], ids), p["fuse.w_up"])
        gate = ad.sigmoid(ad.matmul(ad.concat_cols([e_g, e_d]), p["fuse.v"]))  # (L, 1)
        if collect_gates is not None:
            collect_gates.append(gate.data.ravel().copy())
        one_minus = ad.sub(ad.constant(np.ones_like(gate.data)), gate)
        return ad.add(ad.mul(gate, e_g), ad.mul(one_minus, e_d))

    def decode_hidden(self, memory, prefix_ids):
        c = self.config
        p = self.params
        n = len(prefix_ids)
        if n > c.max_len:
            raise InferenceError(f"prefix length {n} exceeds max_len {c.max_len}")
        x = ad.add(self.fuse_embeddings(prefix_ids), ad.constant(self.positions[:n]))
        mask = L.causal_mask(n)
        for i in range(c.num_layers):
            attn = L.multi_head_attention(x, x, p, f"dec.l{i}.self", c.num_heads, mask=mask)
            x = L.add_norm(x, attn, p, f"dec.l{i}.self_norm")
            cross = L.multi_head_attention(x, memory, p, f"dec.l{i}.cross", c.num_heads)
            x = L.add_norm(x, cross, p, f"dec.l{i}.cross_norm")
            x = L.add_norm(x, L.feed_forward(x, p, f"dec.l{i}.ffn"), p, f"dec.l{i}.ffn_norm")
        return x

    def sequence_logits(self, memory, prefix_ids):
        hidden = self.decode_hidden(memory, prefix_ids)
        return L.linear(hidden, self.params["out.w"], self.params["out.b"])

    def decode_step(self, memory, prefix_ids):
        """Next-token probability vector given the generated prefix."""
        logits = self.sequence_logits(memory, prefix_ids)
        last = ad.slice_cols(ad.transpose(logits), len(prefix_ids) - 1, len(prefix_ids))
        return ad.softmax(ad.transpose(last), axis=-1).data.ravel()

    # ------------------------------------------------------------------
    # loss

    def example_loss(self, topic_ids, dec_input, target, psi):
        """Summed per-position divergence for one teacher-forced sequence."""
        c = self.config
        memory = self.encode(topic_ids, psi)
        logits = self.sequence_logits(memory, dec_input)
        logp = ad.log_softmax(logits, axis=-1)
        logq = _log_smoothed_rows(c.vocab_size, c.label_smoothing_eps)[np.asarray(target)]
        if c.kl_direction == "model_to_target":
            # sum_v p (log p - log q)
            p = ad.exp(logp)
            per = ad.mul(p, ad.sub(logp, ad.constant(logq)))
        else:
            # sum_v q (log q - log p)
            q = np.exp(logq)
            per = ad.sub(ad.constant(q * logq), ad.mul(ad.constant(q), logp))
        return ad.tsum(per)

    def forward_loss(self, batch, psi):
        """Mean divergence per non-padded target position over a batch."""
        total = None
        tokens = 0
        for r in range(batch.topics.shape[0]):
            topics = batch.topics[r][batch.topic_mask[r] == 1]
            steps = int(batch.target_mask[r].sum())
            loss = self.example_loss(topics, batch.dec_input[r, :steps],
                                     batch.target[r, :steps], psi)
            total = loss if total is None else ad.add(total, loss)
            tokens += steps
        return ad.scale(total, 1.0 / tokens)

    # ------------------------------------------------------------------
    # parameter plumbing

    def trainable_params(self):
        return dict(self.params)

    def flat_param_vector(self):
        names = sorted(self.params)
        return np.concatenate([self.params[n].data.ravel() for n in names])

    def set_flat_param_vector(self, vec):
        off = 0
        for n in sorted(self.params):
            t = self.params[n]
            size = t.data.size
            t.data = vec[off:off + size].reshape(t.data.shape).copy()
            off += size

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None
