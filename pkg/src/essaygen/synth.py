"""Synthetic corpus generator.

Each topic owns a fixed set of content words, and an essay is a
deterministic concatenation of per-topic phrases, so that topic words are
correlated with essay content by construction.  Tiny models can memorize
such corpora exactly, and held-out topic combinations remain predictable
per topic, which is what the overfit and ablation checks need.
"""

from __future__ import annotations

import itertools
import json

import numpy as np


def topic_name(i):
    return f"topic{i}"


def topic_phrase(i):
    a, b, c = f"w{i}a", f"w{i}b", f"w{i}c"
    return f"the {a} and {b} with {c}"


def essay_for(topic_indices):
    return " . ".join(topic_phrase(i) for i in topic_indices)


def synthesize_corpus(n_pairs, seed, n_topics=8, min_topics=2, max_topics=3,
                      holdout=0):
    """Records over distinct topic combinations; last `holdout` are held out.

    Returns (train_records, holdout_records), each a list of
    {"topics": [...], "essay": "..."} dicts.
    """
    rng = np.random.default_rng(seed)
    combos = []
    for size in range(min_topics, max_topics + 1):
        combos.extend(itertools.combinations(range(n_topics), size))
    order = rng.permutation(len(combos))
    total = n_pairs + holdout
    if total > len(combos):
        raise ValueError(f"only {len(combos)} distinct topic combinations available")
    chosen = [combos[i] for i in order[:total]]
    records = [{"topics": [topic_name(i) for i in combo], "essay": essay_for(combo)}
               for combo in chosen]
    return records[:n_pairs], records[n_pairs:]


def write_corpus(records, path):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
