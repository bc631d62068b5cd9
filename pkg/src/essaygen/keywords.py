"""Topic-context preprocessing: per-essay TextRank keywords, topic-keyword
co-occurrence counting, and the frozen top-k topic->keywords map consumed
by the encoder's keyword attention."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import PAD, BOS, EOS, UNK

RESERVED_IDS = {PAD, BOS, EOS, UNK}


@dataclass
class ExtractorConfig:
    top_n: int = 10          # keywords kept per essay
    window: int = 5          # co-occurrence window size
    damping: float = 0.85
    tol: float = 1e-6
    max_iter: int = 200
    stopword_ids: frozenset = frozenset()

    def __post_init__(self):
        if self.top_n < 1 or self.window < 2 or not 0.0 < self.damping < 1.0:
            raise ValueError("invalid extractor configuration")


def textrank_scores(essay, config):
    """Damped graph iteration over one essay's window co-occurrence graph.

    Nodes are the distinct candidate token ids (reserved ids and stopwords
    excluded); undirected edge weights count co-occurrences within the
    window.  Returns (nodes, scores) in ascending node-id order.
    """
    candidates = [t for t in essay if t not in RESERVED_IDS and t not in config.stopword_ids]
    nodes = sorted(set(candidates))
    if not nodes:
        return [], np.zeros(0)
    idx = {t: i for i, t in enumerate(nodes)}
    n = len(nodes)
    w = np.zeros((n, n))
    for i, a in enumerate(candidates):
        for b in candidates[i + 1:i + config.window]:
            if a != b:
                w[idx[a], idx[b]] += 1.0
                w[idx[b], idx[a]] += 1.0
    deg = w.sum(axis=1)
    safe_deg = np.where(deg > 0, deg, 1.0)
    d = config.damping
    scores = np.ones(n)
    for _ in range(config.max_iter):
        new = (1.0 - d) + d * (w / safe_deg[:, None]).T @ scores
        if np.abs(new - scores).max() < config.tol:
            scores = new
            break
        scores = new
    return nodes, scores


def textrank_keywords(essay, config):
    """Top-ranked candidate ids of one essay, ordered (score desc, id asc)."""
    nodes, scores = textrank_scores(essay, config)
    ranked = sorted(range(len(nodes)), key=lambda i: (-scores[i], nodes[i]))
    return [nodes[i] for i in ranked[:config.top_n]]


def build_cooccurrence(pairs, config):
    """Count (topic, extracted keyword) incidences over all corpus pairs."""
    counts = {}
    for pair in pairs:
        kws = textrank_keywords(pair.essay, config)
        for t in pair.topics:
            row = counts.setdefault(t, {})
            for k in kws:
                row[k] = row.get(k, 0) + 1
    return counts


@dataclass
class TopicContextMap:
    """Frozen topic -> top-k keyword ids mapping."""

    k: int
    contexts: dict[int, list[int]] = field(default_factory=dict)

    def keywords_for(self, topic_id):
        """Context keywords for one topic; falls back to the topic itself."""
        kws = self.contexts.get(topic_id)
        return kws if kws else [topic_id]

    def save(self, path, vocab):
        payload = {
            "k": self.k,
            "contexts": {
                vocab.token_of(t): [vocab.token_of(k) for k in kws]
                for t, kws in sorted(self.contexts.items())
            },
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path, vocab):
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        contexts = {
            vocab.id_of(t): [vocab.id_of(k) for k in kws]
            for t, kws in payload["contexts"].items()
        }
        return cls(k=payload["k"], contexts=contexts)


def top_k_contexts(counts, k):
    """Keep each topic's k largest-count keywords; ties break by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    contexts = {}
    for t, row in counts.items():
        ranked = sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))
        contexts[t] = [kid for kid, _ in ranked[:k]]
    return TopicContextMap(k=k, contexts=contexts)


def build_topic_contexts(pairs, k, config=None):
    """Full preprocessing pipeline: extract, accumulate, select top-k."""
    config = config or ExtractorConfig()
    return top_k_contexts(build_cooccurrence(pairs, config), k)
