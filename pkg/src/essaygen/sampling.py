"""Autoregressive generation with top-k sampling, plus full-distribution
rescoring of a given essay.

Randomness contract: one numpy Generator (PCG64) seeded from GenConfig.seed,
advanced by exactly one uniform draw per generated token; the token is
picked by inverse CDF over the truncated candidates ordered by
(probability desc, id asc).  sample_k=1 therefore degenerates to greedy
argmax with no RNG consumption difference mattering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import BOS, EOS, PAD, UNK
from .model import InferenceError


@dataclass
class GenConfig:
    sample_k: int = 20
    max_len: int = 150
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sample_k < 1 or self.max_len < 1 or self.temperature <= 0:
            raise ValueError("invalid generation configuration")


@dataclass
class Generation:
    tokens: list[int]            # emitted ids, EOS included if reached
    logprobs: list[float]        # under the renormalized truncated distribution
    full_logprobs: list[float]   # under the raw model distribution


def resolve_topics(topic_tokens, vocab, psi):
    """Map topic strings to ids; unseen topics fall back to UNK."""
    ids = []
    for tok in topic_tokens:
        tid = vocab.id_of(tok)
        if tid == UNK and tok not in vocab.index:
            warnings.warn(f"unseen topic {tok!r}: falling back to the unknown token")
        ids.append(tid)
    return ids


def truncated_distribution(probs, sample_k, temperature=1.0):
    """Top-k candidate ids and renormalized probabilities for one step."""
    p = np.array(probs, dtype=np.float64)
    p[PAD] = 0.0
    p[BOS] = 0.0
    if temperature != 1.0:
        with np.errstate(divide="ignore"):
            logp = np.where(p > 0, np.log(p), -np.inf) / temperature
        p = np.exp(logp - logp.max())
    k = min(sample_k, len(p))
    order = np.lexsort((np.arange(len(p)), -p))[:k]
    order = order[p[order] > 0]
    top = p[order]
    total = top.sum()
    if total <= 0:
        raise InferenceError("no admissible token has positive probability")
    return order, top / total


def generate(model, psi, topic_ids, config):
    """Sample an essay for a topic set; stops at EOS or max_len tokens."""
    rng = np.random.default_rng(config.seed)
    prefix = [BOS]
    tokens, logprobs, full_logprobs = [], [], []
    memory = model.encode(topic_ids, psi)
    for _ in range(min(config.max_len, model.config.max_len - 1)):
        probs = model.decode_step(memory, prefix)
        cand, trunc = truncated_distribution(probs, config.sample_k, config.temperature)
        if config.sample_k == 1:
            pick = 0
        else:
            u = rng.random()
            pick = int(np.searchsorted(np.cumsum(trunc), u, side="right"))
            pick = min(pick, len(cand) - 1)
        tid = int(cand[pick])
        tokens.append(tid)
        logprobs.append(float(np.log(trunc[pick])))
        full_logprobs.append(float(np.log(probs[tid])))
        if tid == EOS:
            break
        prefix.append(tid)
    return Generation(tokens, logprobs, full_logprobs)


def rescore(model, psi, topic_ids, essay_ids):
    """Total log-likelihood of an essay under the full model distribution."""
    memory = model.encode(topic_ids, psi)
    prefix = [BOS]
    total = 0.0
    per_token = []
    for tid in essay_ids:
        probs = model.decode_step(memory, prefix)
        lp = float(np.log(probs[int(tid)]))
        per_token.append(lp)
        total += lp
        prefix.append(int(tid))
    return total, per_token
