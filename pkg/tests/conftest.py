import numpy as np
import pytest

from essaygen.corpus import BOS, EOS, ExamplePair
from essaygen.keywords import TopicContextMap
from essaygen.lmprovider import FrozenCausalLM, ProviderConfig
from essaygen.model import ModelConfig, TopicEssayModel

VOCAB_SIZE = 12


def tiny_config(**overrides):
    base = dict(vocab_size=VOCAB_SIZE, num_layers=2, hidden_dim=32, num_heads=2,
                ffn_dim=32, finder_dim=8, k_contexts=3, max_len=20, lm_dim=16,
                variant="full")
    base.update(overrides)
    return ModelConfig(**base)


def tiny_provider(seed=0):
    lm = FrozenCausalLM(ProviderConfig(vocab_size=VOCAB_SIZE, hidden_dim=16,
                                       num_layers=1, num_heads=2, ffn_dim=16,
                                       max_len=24), seed=seed)
    lm.freeze()
    return lm


def tiny_psi():
    return TopicContextMap(k=3, contexts={t: [4 + (t + i) % 6 for i in range(3)]
                                          for t in range(4, VOCAB_SIZE)})


def tiny_model(seed=0, **overrides):
    cfg = tiny_config(**overrides)
    provider = tiny_provider() if cfg.uses_embedding_fusion else None
    return TopicEssayModel(cfg, provider=provider, seed=seed)


def tiny_pairs(n=6, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        topics = sorted(rng.choice(range(4, VOCAB_SIZE), size=2, replace=False).tolist())
        essay = rng.integers(4, VOCAB_SIZE, size=4).tolist()
        pairs.append(ExamplePair(topics, [BOS] + essay + [EOS]))
    return pairs


@pytest.fixture
def psi():
    return tiny_psi()


@pytest.fixture
def model():
    return tiny_model()
