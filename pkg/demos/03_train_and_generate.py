"""Train a small model and sample essays from it.

The model is a transformer encoder-decoder with two additions: each
encoder layer lets every topic attend over its context keywords, and
the decoder's input embeddings gate between a frozen general-LM channel
and a trainable domain channel.  Training minimizes a label-smoothed
divergence per target token.
"""

import tempfile

from essaygen.corpus import detokenize, load_corpus
from essaygen.experiment import strip_eos, train_variant
from essaygen.keywords import build_topic_contexts
from essaygen.model import ModelConfig
from essaygen.sampling import GenConfig, generate, resolve_topics
from essaygen.synth import synthesize_corpus, write_corpus
from essaygen.training import TrainConfig

with tempfile.NamedTemporaryFile(suffix=".jsonl", mode="w", delete=False) as f:
    path = f.name
write_corpus(synthesize_corpus(20, seed=7)[0], path)
pairs, vocab, _ = load_corpus(path)
psi = build_topic_contexts(pairs, k=8)

config = ModelConfig(vocab_size=len(vocab.tokens), num_layers=2, hidden_dim=64,
                     num_heads=4, ffn_dim=128, lm_dim=32)
model, state = train_variant(pairs, psi, vocab, config,
                             TrainConfig(epochs=60, batch_size=8, seed=0))
print(f"trained {state.step} steps, best loss {state.best_loss:.3f} nats/token")

topics = resolve_topics(["topic1", "topic3"], vocab, psi)

# Greedy decoding (sample_k=1) is deterministic.
greedy = generate(model, psi, topics, GenConfig(sample_k=1, max_len=40))
print("greedy: ", detokenize(strip_eos(greedy.tokens), vocab))

# Top-k sampling draws from the renormalized k best tokens per step;
# different seeds give different essays.
for seed in (1, 2):
    gen = generate(model, psi, topics,
                   GenConfig(sample_k=5, max_len=40, seed=seed))
    print(f"k=5 s={seed}:", detokenize(strip_eos(gen.tokens), vocab))
