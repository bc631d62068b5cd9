"""High-level experiment plumbing: wiring a corpus into a trained model
and scoring generations on held-out pairs; used by the command line and
the ablation study."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import EOS
from .lmprovider import FrozenCausalLM, ProviderConfig
from .metrics import MetricReport, evaluate
from .model import ModelConfig, TopicEssayModel
from .sampling import GenConfig, generate
from .training import pretrain_provider, train

VARIANT_ORDER = ("vanilla", "ef_only", "te_only", "full")


def make_provider(vocab_size, pairs, seed, hidden_dim=32, num_layers=1,
                  num_heads=2, ffn_dim=64, max_len=160, pretrain_epochs=20,
                  slice_fraction=1.0):
    """Build and pretrain the frozen general-LM on a slice of the corpus.

    An undertrained provider feeds noise through the fusion gate, so the
    default pretrains on the whole slice until its hidden states carry
    real next-token signal.
    """
    lm = FrozenCausalLM(ProviderConfig(vocab_size=vocab_size, hidden_dim=hidden_dim,
                                       num_layers=num_layers, num_heads=num_heads,
                                       ffn_dim=ffn_dim, max_len=max_len), seed=seed)
    if pretrain_epochs > 0 and pairs:
        n = max(1, int(len(pairs) * slice_fraction))
        pretrain_provider(lm, pairs[-n:], epochs=pretrain_epochs, seed=seed)
    else:
        lm.freeze()
    return lm


def train_variant(pairs, psi, vocab, model_config, train_config, provider=None,
                  out_dir=None, grad_check=False, log_hook=None):
    """Train one model variant from scratch; returns (model, state)."""
    if model_config.uses_embedding_fusion and provider is None:
        provider = make_provider(model_config.vocab_size, pairs,
                                 seed=train_config.seed,
                                 hidden_dim=model_config.lm_dim)
    model = TopicEssayModel(model_config, provider=provider, seed=train_config.seed)
    state = train(pairs, psi, model, train_config, vocab, out_dir=out_dir,
                  grad_check=grad_check, log_hook=log_hook)
    return model, state


def strip_eos(tokens):
    return tokens[:-1] if tokens and tokens[-1] == EOS else list(tokens)


def evaluate_on_pairs(model, psi, pairs, gen_config):
    """Generate one essay per held-out pair and score against references."""
    candidates, references = [], []
    for i, pair in enumerate(pairs):
        cfg = GenConfig(sample_k=gen_config.sample_k, max_len=gen_config.max_len,
                        temperature=gen_config.temperature,
                        seed=gen_config.seed + i)
        gen = generate(model, psi, pair.topics, cfg)
        candidates.append(strip_eos(gen.tokens))
        references.append(strip_eos(pair.essay[1:]))
    return evaluate(candidates, references), candidates


@dataclass
class AblationRow:
    variant: str
    trainable_params: int
    final_loss: float
    report: MetricReport | None
    error: str | None = None


def run_ablation(train_pairs, heldout_pairs, vocab, psi, base_model_config,
                 train_config, gen_config, variants=VARIANT_ORDER):
    """Train every variant with shared seed/data and score the held-out slice."""
    provider = make_provider(base_model_config.vocab_size, train_pairs,
                             seed=train_config.seed,
                             hidden_dim=base_model_config.lm_dim)
    rows = []
    for variant in variants:
        cfg = ModelConfig(**{**base_model_config.to_dict(), "variant": variant})
        lm = provider if cfg.uses_embedding_fusion else None
        try:
            model, state = train_variant(train_pairs, psi, vocab, cfg,
                                         train_config, provider=lm)
            report, _ = evaluate_on_pairs(model, psi, heldout_pairs, gen_config)
            rows.append(AblationRow(
                variant=variant,
                trainable_params=sum(t.data.size for t in model.params.values()),
                final_loss=state.best_loss,
                report=report))
        except Exception as e:   # a failed variant yields a partial report
            rows.append(AblationRow(variant=variant, trainable_params=0,
                                    final_loss=float("nan"), report=None,
                                    error=str(e)))
    return rows


def format_ablation_table(rows):
    lines = [f"{'Method':<10} {'BLEU-2':>8} {'Rouge-L':>8} {'Dist-1':>8} {'Dist-2':>8} {'Params':>9}"]
    for row in rows:
        if row.report is None:
            lines.append(f"{row.variant:<10} FAILED: {row.error}")
        else:
            r = row.report
            lines.append(f"{row.variant:<10} {r.bleu2:>8.2f} {r.rouge_l:>8.2f} "
                         f"{r.dist1:>8.2f} {r.dist2:>8.2f} {row.trainable_params:>9d}")
    return "\n".join(lines)
