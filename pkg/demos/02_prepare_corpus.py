"""From raw JSONL pairs to a topic->keywords context map.

The preprocessing pipeline reads {topics, essay} records, builds a
vocabulary, extracts per-essay keywords with TextRank, accumulates
topic/keyword co-occurrence counts, and keeps each topic's top-k
keywords.  The resulting map is what the encoder's keyword attention
consumes at train and inference time.
"""

import tempfile

from essaygen.corpus import corpus_stats, load_corpus
from essaygen.keywords import ExtractorConfig, build_topic_contexts, textrank_keywords
from essaygen.synth import synthesize_corpus, write_corpus

# A synthetic corpus ships in-tree: every topic deterministically
# contributes a clause of content words, so topic->keyword structure is
# learnable by construction.
records, _ = synthesize_corpus(30, seed=4)
with tempfile.NamedTemporaryFile(suffix=".jsonl", mode="w", delete=False) as f:
    path = f.name
write_corpus(records, path)

pairs, vocab, rejected = load_corpus(path)
stats = corpus_stats(pairs)
print(f"{stats['total']} pairs, {stats['topics']} distinct topics, "
      f"avg {stats['avg_t']:.2f} topics and {stats['avg_len']:.1f} tokens per pair")

# TextRank on a single essay: distinct tokens are graph nodes, window
# co-occurrences are edge weights, and a damped iteration ranks them.
config = ExtractorConfig(top_n=5)
first = pairs[0]
keywords = textrank_keywords(first.essay, config)
print("essay 0 topics:  ", [vocab.token_of(t) for t in first.topics])
print("essay 0 keywords:", [vocab.token_of(k) for k in keywords])

# The full pipeline aggregates keyword counts per topic across the
# corpus and keeps the top-k for each.
psi = build_topic_contexts(pairs, k=4, config=config)
for topic_id in sorted(psi.contexts)[:4]:
    names = [vocab.token_of(k) for k in psi.keywords_for(topic_id)]
    print(f"contexts[{vocab.token_of(topic_id)}] = {names}")
