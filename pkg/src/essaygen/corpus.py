"""Corpus ingestion: JSONL (topics, essay) records, vocabulary, batches.

Record format is line-delimited JSON with fields "topics" (list of
strings, each kept intact as a single token) and "essay" (string).
Reserved ids 0..3 are PAD, BOS, EOS, UNK.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

MAX_ESSAY_TOKENS = 150


class CorpusError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Dense token<->id bijection with fixed reserved ids."""

    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if list(self.tokens[:4]) != list(RESERVED):
            raise CorpusError("vocabulary must start with the reserved tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CorpusError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token):
        return self.index.get(token, UNK)

    def token_of(self, tid):
        return self.tokens[tid]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f])


@dataclass
class ExamplePair:
    topics: list[int]         # distinct topic token ids
    essay: list[int]          # BOS ... EOS


@dataclass
class Batch:
    topics: np.ndarray        # (B, maxN) int, PAD-filled
    topic_mask: np.ndarray    # (B, maxN) 0/1
    dec_input: np.ndarray     # (B, maxL): BOS + targets[:-1]
    target: np.ndarray        # (B, maxL): essay tokens after BOS, EOS-terminated
    target_mask: np.ndarray   # (B, maxL) 0/1


def split_tokens(text, mode="whitespace"):
    if mode == "whitespace":
        return text.split()
    if mode == "char":
        return [c for c in text if not c.isspace()]
    raise CorpusError(f"unknown tokenizer mode {mode!r}")


def tokenize(text, vocab, mode="whitespace"):
    return [vocab.id_of(t) for t in split_tokens(text, mode)]


def detokenize(ids, vocab):
    return " ".join(vocab.token_of(i) for i in ids)


def build_vocabulary(records, mode="whitespace", min_count=1):
    """Frequency-descending, lexicographic-tiebreak vocabulary over all tokens."""
    counts = {}
    for topics, essay in records:
        for tok in topics:
            counts[tok] = counts.get(tok, 0) + 1
        for tok in split_tokens(essay, mode):
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in RESERVED),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(list(RESERVED) + kept)


def parse_records(path):
    """Yield (topics, essay) tuples; reject malformed or topic-less lines."""
    records, rejected = [], 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                topics = rec["topics"]
                essay = rec["essay"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CorpusError(f"{path}:{lineno}: malformed record ({e})") from e
            if not isinstance(topics, list) or not topics:
                rejected += 1
                continue
            records.append((list(dict.fromkeys(topics)), essay))
    return records, rejected


def encode_records(records, vocab, mode="whitespace", max_len=MAX_ESSAY_TOKENS):
    """Encode (topics, essay) tuples against an existing vocabulary."""
    pairs = []
    for topics, essay in records:
        if isinstance(topics, str):
            raise CorpusError("topics must be a list of tokens, not a string")
        topic_ids = [vocab.id_of(t) for t in topics]
        essay_ids = tokenize(essay, vocab, mode)[:max_len]
        pairs.append(ExamplePair(topic_ids, [BOS] + essay_ids + [EOS]))
    return pairs


def load_corpus(path, mode="whitespace", min_count=1, max_len=MAX_ESSAY_TOKENS):
    """Read a JSONL corpus; returns (pairs, vocab, rejected_count)."""
    records, rejected = parse_records(path)
    vocab = build_vocabulary(records, mode=mode, min_count=min_count)
    return encode_records(records, vocab, mode, max_len), vocab, rejected


def make_batches(pairs, batch_size, seed):
    """Seeded shuffle, then pad each batch to its own max lengths."""
    if batch_size < 1:
        raise CorpusError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start:start + batch_size]]
        max_n = max(len(p.topics) for p in chunk)
        max_l = max(len(p.essay) - 1 for p in chunk)
        b = len(chunk)
        topics = np.full((b, max_n), PAD, dtype=np.int64)
        tmask = np.zeros((b, max_n), dtype=np.int64)
        dec_in = np.full((b, max_l), PAD, dtype=np.int64)
        target = np.full((b, max_l), PAD, dtype=np.int64)
        ymask = np.zeros((b, max_l), dtype=np.int64)
        for r, p in enumerate(chunk):
            n, l = len(p.topics), len(p.essay) - 1
            topics[r, :n] = p.topics
            tmask[r, :n] = 1
            dec_in[r, :l] = p.essay[:-1]
            target[r, :l] = p.essay[1:]
            ymask[r, :l] = 1
        batches.append(Batch(topics, tmask, dec_in, target, ymask))
    return batches


def corpus_stats(pairs):
    """Per-corpus summary: totals, distinct topic count, mean topics/length."""
    n = len(pairs)
    topics = set()
    for p in pairs:
        topics.update(p.topics)
    avg_t = sum(len(p.topics) for p in pairs) / n if n else 0.0
    avg_len = sum(len(p.essay) - 2 for p in pairs) / n if n else 0.0
    return {"total": n, "topics": len(topics), "avg_t": avg_t, "avg_len": avg_len}
