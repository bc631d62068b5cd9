"""Command-line front end: prep / train / generate / eval / ablate.

Every artifact-producing subcommand writes a manifest.json recording its
configuration, input hashes, and artifact hashes; the process exits 0 only
when every artifact re-reads with the recorded hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

from . import __version__
from .corpus import (EOS, Vocabulary, corpus_stats, detokenize, encode_records,
                     load_corpus, parse_records)
from .experiment import (format_ablation_table, make_provider,
                         run_ablation, train_variant)
from .keywords import ExtractorConfig, TopicContextMap, build_topic_contexts
from .metrics import evaluate
from .model import ModelConfig
from .sampling import GenConfig, generate, resolve_topics
from .synth import synthesize_corpus, write_corpus
from .training import TrainConfig, load_checkpoint


class CliError(RuntimeError):
    pass


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_snapshot(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def write_manifest(out_dir, command, config, inputs, artifact_paths):
    """Record the run, then verify every artifact against its hash.

    Returns 0 when all artifacts re-read with the recorded hash, 1 otherwise.
    """
    artifacts = {p: file_sha256(p) for p in artifact_paths}
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config": config,
        "inputs": {p: file_sha256(p) for p in inputs},
        "artifacts": artifacts,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = f"{out_dir}/manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    for p, digest in artifacts.items():
        if file_sha256(p) != digest:
            print(f"artifact hash mismatch: {p}", file=sys.stderr)
            return 1
    return 0


def read_token_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f if line.strip()]


# ---------------------------------------------------------------- subcommands

def cmd_prep(args):
    import os
    os.makedirs(args.out, exist_ok=True)
    inputs = []
    if args.synthesize:
        records, holdout = synthesize_corpus(args.synthesize, seed=args.seed,
                                             holdout=args.holdout)
        corpus_path = f"{args.out}/corpus.jsonl"
        write_corpus(records, corpus_path)
        if holdout:
            write_corpus(holdout, f"{args.out}/heldout.jsonl")
    elif args.corpus:
        corpus_path = args.corpus
        inputs.append(corpus_path)
    else:
        raise CliError("prep needs --corpus or --synthesize")

    pairs, vocab, rejected = load_corpus(corpus_path, mode=args.tokenizer,
                                         min_count=args.min_count)
    extractor = ExtractorConfig(top_n=args.top_n, window=args.window,
                                damping=args.damping)
    psi = build_topic_contexts(pairs, args.k, extractor)
    vocab_path = f"{args.out}/vocab.txt"
    psi_path = f"{args.out}/psi.json"
    vocab.save(vocab_path)
    psi.save(psi_path, vocab)

    stats = corpus_stats(pairs)
    stats["rejected"] = rejected
    stats_path = f"{args.out}/stats.json"
    with open(stats_path, "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.json:
        print(json.dumps(stats, sort_keys=True))
    else:
        print(f"Total={stats['total']} Topics={stats['topics']} "
              f"Avg-T={stats['avg_t']:.2f} Avg-Len={stats['avg_len']:.2f} "
              f"Rejected={rejected}")

    artifacts = [vocab_path, psi_path, stats_path]
    if args.synthesize:
        artifacts.append(corpus_path)
        if args.holdout:
            artifacts.append(f"{args.out}/heldout.jsonl")
    return write_manifest(args.out, "prep", config_snapshot(args), inputs, artifacts)


def load_config_file(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    unknown = set(cfg) - {"model", "train", "provider"}
    if unknown:
        raise CliError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def cmd_train(args):
    import os
    os.makedirs(args.out, exist_ok=True)
    pairs, vocab, _ = load_corpus(args.corpus, mode=args.tokenizer)
    psi = TopicContextMap.load(args.psi, vocab)
    cfg = load_config_file(args.config)

    model_kw = dict(cfg.get("model", {}))
    model_kw["vocab_size"] = len(vocab.tokens)
    if args.variant:
        model_kw["variant"] = args.variant
    model_config = ModelConfig(**model_kw)

    train_kw = dict(cfg.get("train", {}))
    for flag in ("epochs", "batch_size", "learning_rate"):
        value = getattr(args, flag)
        if value is not None:
            train_kw[flag] = value
    train_kw.setdefault("seed", args.seed)
    train_config = TrainConfig(**train_kw)

    provider = None
    if model_config.uses_embedding_fusion:
        prov_kw = dict(cfg.get("provider", {}))
        provider = make_provider(model_config.vocab_size, pairs,
                                 seed=train_config.seed,
                                 hidden_dim=model_config.lm_dim, **prov_kw)

    log_path = f"{args.out}/train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log:
        def log_hook(record):
            log.write(json.dumps(record) + "\n")
        model, state = train_variant(pairs, psi, vocab, model_config,
                                     train_config, provider=provider,
                                     out_dir=args.out,
                                     grad_check=args.grad_check,
                                     log_hook=log_hook)
    summary = {"epochs": state.epoch, "steps": state.step,
               "best_loss": state.best_loss}
    print(json.dumps(summary) if args.json else
          f"trained {state.epoch} epochs ({state.step} steps), "
          f"best loss {state.best_loss:.4f} nats/token")
    artifacts = [f"{args.out}/final.npz", f"{args.out}/best.npz", log_path]
    inputs = [args.corpus, args.psi] + ([args.config] if args.config else [])
    return write_manifest(args.out, "train", config_snapshot(args), inputs, artifacts)


def model_from_checkpoint(path):
    """Rebuild (model, vocab, meta) from a self-contained checkpoint."""
    model, _, meta = load_checkpoint(path)
    vocab = Vocabulary(meta["vocab_tokens"])
    return model, vocab, meta


def cmd_generate(args):
    model, vocab, meta = model_from_checkpoint(args.checkpoint)
    psi = TopicContextMap.load(args.psi, vocab)
    from .training import psi_hash
    if psi_hash(psi) != meta["psi_hash"]:
        raise CliError("topic-context file does not match the checkpoint")
    topics = [t.strip() for t in args.topics.split(",") if t.strip()]
    if not topics:
        raise CliError("no topics given")
    topic_ids = resolve_topics(topics, vocab, psi)
    gen = generate(model, psi, topic_ids,
                   GenConfig(sample_k=args.k, max_len=args.max_len,
                             temperature=args.temperature, seed=args.seed))
    out_ids = gen.tokens[:-1] if gen.tokens and gen.tokens[-1] == EOS else gen.tokens
    text = detokenize(out_ids, vocab)
    if args.json:
        print(json.dumps({"topics": topics, "tokens": gen.tokens,
                          "text": text, "logprobs": gen.logprobs}))
    else:
        print(text)
    return 0


def cmd_eval(args):
    candidates = read_token_lines(args.candidates)
    references = read_token_lines(args.references)
    report = evaluate(candidates, references)
    payload = report.to_dict()
    print(json.dumps(payload) if args.json else json.dumps(payload, indent=2))
    return 0


def cmd_ablate(args):
    import os
    os.makedirs(args.out, exist_ok=True)
    records, _ = parse_records(args.corpus)
    heldout_records, _ = parse_records(args.heldout)
    pairs, vocab, _ = load_corpus(args.corpus, mode=args.tokenizer)
    heldout_pairs = encode_records(heldout_records, vocab, mode=args.tokenizer)
    psi = build_topic_contexts(pairs, args.k)

    base = ModelConfig(vocab_size=len(vocab.tokens),
                       num_layers=args.num_layers, hidden_dim=args.hidden_dim,
                       num_heads=args.num_heads, ffn_dim=args.ffn_dim,
                       lm_dim=args.hidden_dim, k_contexts=args.k)
    train_config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                               learning_rate=args.learning_rate, seed=args.seed)
    gen_config = GenConfig(sample_k=args.sample_k, seed=args.seed)
    rows = run_ablation(pairs, heldout_pairs, vocab, psi, base,
                        train_config, gen_config)

    table = format_ablation_table(rows)
    report = [{"variant": r.variant, "trainable_params": r.trainable_params,
               "final_loss": r.final_loss, "error": r.error,
               "metrics": r.report.to_dict() if r.report else None}
              for r in rows]
    report_path = f"{args.out}/ablation.json"
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    table_path = f"{args.out}/ablation.txt"
    with open(table_path, "w", encoding="utf-8") as f:
        f.write(table + "\n")
    print(json.dumps(report) if args.json else table)
    status = write_manifest(args.out, "ablate", config_snapshot(args),
                            [args.corpus, args.heldout],
                            [report_path, table_path])
    if any(r.report is None for r in rows):
        return 1
    return status


# -------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="essaygen",
        description="Topic-to-essay generation: preprocessing, training, "
                    "sampling, evaluation, and the variant ablation study.")
    parser.add_argument("--version", action="version",
                        version=f"essaygen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true",
                       help="machine-readable output")

    p = sub.add_parser("prep", help="build vocabulary, topic contexts, stats")
    p.add_argument("--corpus", help="JSONL corpus of {topics, essay} records")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=8,
                   help="context keywords kept per topic")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--tokenizer", choices=("whitespace", "char"),
                   default="whitespace")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--synthesize", type=int, metavar="N",
                   help="generate an N-pair synthetic corpus instead of reading one")
    p.add_argument("--holdout", type=int, default=0,
                   help="extra held-out pairs when synthesizing")
    common(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train a model on a prepared corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--psi", required=True, help="topic-context JSON from prep")
    p.add_argument("--config", help="JSON with model/train/provider sections")
    p.add_argument("--out", required=True)
    p.add_argument("--grad-check", action="store_true",
                   help="finite-difference check on a micro-batch before training")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--variant",
                   choices=("full", "te_only", "ef_only", "vanilla"))
    p.add_argument("--tokenizer", choices=("whitespace", "char"),
                   default="whitespace")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample an essay for a topic set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--psi", required=True)
    p.add_argument("--topics", required=True, help='comma-separated, e.g. "a,b,c"')
    p.add_argument("--k", type=int, default=20, help="top-k sampling width")
    p.add_argument("--max-len", type=int, default=150)
    p.add_argument("--temperature", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score candidate essays against references")
    p.add_argument("--candidates", required=True,
                   help="one whitespace-tokenized essay per line")
    p.add_argument("--references", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate",
                       help="train all four variants and compare on held-out data")
    p.add_argument("--corpus", required=True)
    p.add_argument("--heldout", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--num-layers", type=int, default=2)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--num-heads", type=int, default=4)
    p.add_argument("--ffn-dim", type=int, default=128)
    p.add_argument("--sample-k", type=int, default=1,
                   help="1 is greedy decoding")
    p.add_argument("--tokenizer", choices=("whitespace", "char"),
                   default="whitespace")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
