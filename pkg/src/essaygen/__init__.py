"""Topic-to-essay generation: a transformer encoder-decoder with keyword-
context attention in the encoder and gated fusion of frozen general-LM
and learnable domain embeddings in the decoder, plus the preprocessing,
training, sampling, and evaluation machinery around it."""

__version__ = "0.1.0"

from .corpus import (Batch, ExamplePair, Vocabulary, load_corpus,
                     make_batches, tokenize)
from .experiment import (evaluate_on_pairs, make_provider, run_ablation,
                         train_variant)
from .keywords import (ExtractorConfig, TopicContextMap, build_cooccurrence,
                       build_topic_contexts, textrank_keywords,
                       textrank_scores, top_k_contexts)
from .lmprovider import FrozenCausalLM, ProviderConfig
from .metrics import MetricReport, bleu2, dist_n, evaluate, rouge_l
from .model import ModelConfig, TopicEssayModel
from .sampling import GenConfig, generate, rescore
from .training import (TrainConfig, TrainState, adam_step, gradient_check,
                       load_checkpoint, pretrain_provider, save_checkpoint,
                       train)
