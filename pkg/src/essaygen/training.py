"""Optimization: Adam updates, deterministic epoch loop, checkpointing,
and the finite-difference gradient checker."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import make_batches
from .fastpath import FastLoss
from .lmprovider import FrozenCausalLM, ProviderConfig
from .model import ModelConfig, TopicEssayModel

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0     # epochs; 0 disables periodic checkpoints
    grad_clip: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("learning_rate must be > 0 and epochs >= 1")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    best_loss: float = float("inf")
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state, config):
    """One bias-corrected Adam update over every trainable parameter."""
    state.step += 1
    t = state.step
    for name in sorted(params):
        tensor = params[name]
        if not tensor.requires_grad:
            continue
        g = tensor.grad
        if g is None:
            g = np.zeros_like(tensor.data)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
        if config.grad_clip is not None:
            norm = np.linalg.norm(g)
            if norm > config.grad_clip:
                g = g * (config.grad_clip / norm)
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        state.m[name] = config.beta1 * state.m[name] + (1 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1 - config.beta2) * g * g
        m_hat = state.m[name] / (1 - config.beta1 ** t)
        v_hat = state.v[name] / (1 - config.beta2 ** t)
        tensor.data = tensor.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


# ---------------------------------------------------------------------------
# hashing


def vocab_hash(vocab):
    return hashlib.sha256("\n".join(vocab.tokens).encode()).hexdigest()


def psi_hash(psi):
    canon = json.dumps(
        {"k": psi.k, "contexts": {str(t): list(map(int, kws))
                                  for t, kws in sorted(psi.contexts.items())}},
        sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model, vocab, psi, state=None, train_config=None):
    c = model.config
    meta = {
        "version": CHECKPOINT_VERSION,
        "model_config": c.to_dict(),
        "vocab_hash": vocab_hash(vocab),
        "vocab_tokens": list(vocab.tokens),
        "psi_hash": psi_hash(psi),
        "lm_fingerprint": model.provider.fingerprint() if model.provider else None,
        "provider_config": dict(model.provider.config.__dict__) if model.provider else None,
        "train_config": train_config.to_dict() if train_config else None,
        "step": state.step if state else 0,
        "epoch": state.epoch if state else 0,
        "best_loss": state.best_loss if state else None,
    }
    arrays = {f"param/{k}": t.data for k, t in model.params.items()}
    if model.provider is not None:
        arrays.update({f"lm/{k}": a for k, a in model.provider.state_arrays().items()})
    if state is not None:
        arrays.update({f"opt_m/{k}": a for k, a in state.m.items()})
        arrays.update({f"opt_v/{k}": a for k, a in state.v.items()})
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path, vocab=None, psi=None):
    """Rebuild (model, state, meta); verifies content hashes when given."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in z.files if k != "meta"}
    if vocab is not None and vocab_hash(vocab) != meta["vocab_hash"]:
        raise TrainingError("checkpoint vocabulary hash mismatch")
    if psi is not None and psi_hash(psi) != meta["psi_hash"]:
        raise TrainingError("checkpoint topic-context hash mismatch")
    config = ModelConfig(**meta["model_config"])
    provider = None
    if meta["provider_config"] is not None:
        pc = ProviderConfig(**meta["provider_config"])
        lm_arrays = {k[3:]: v for k, v in arrays.items() if k.startswith("lm/")}
        provider = FrozenCausalLM.from_arrays(pc, lm_arrays)
        if provider.fingerprint() != meta["lm_fingerprint"]:
            raise TrainingError("frozen provider fingerprint mismatch")
    model = TopicEssayModel(config, provider=provider, seed=0)
    for k, arr in arrays.items():
        if k.startswith("param/"):
            model.params[k[6:]].data = np.array(arr)
    state = TrainState(step=meta["step"], epoch=meta["epoch"],
                       best_loss=meta["best_loss"] if meta["best_loss"] is not None else float("inf"))
    state.m = {k[6:]: np.array(v) for k, v in arrays.items() if k.startswith("opt_m/")}
    state.v = {k[6:]: np.array(v) for k, v in arrays.items() if k.startswith("opt_v/")}
    return model, state, meta


# ---------------------------------------------------------------------------
# gradient checking


def analytic_gradients(model, batch, psi):
    model.zero_grads()
    with ad.Tape() as tape:
        loss = model.forward_loss(batch, psi)
        tape.backward(loss)
    return float(loss.data), {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                              for k, t in model.params.items()}


def finite_difference_gradients(model, batch, psi, names, h=1e-5, loss_fn=None):
    """Central differences of the batch loss per parameter element.

    By default the loss is evaluated through the tape-free numpy mirror
    (fastpath.batch_loss), an implementation independent of the autodiff
    engine being checked.
    """
    if loss_fn is None:
        loss_fn = FastLoss(model).compile_batch(batch, psi)
    grads = {}
    for name in names:
        t = model.params[name]
        g = np.zeros_like(t.data)
        flat = t.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def gradient_check(model, batch, psi, h=1e-5, rtol=1e-4, names=None, loss_fn=None):
    """Max relative error between analytic and central-difference grads."""
    _, analytic = analytic_gradients(model, batch, psi)
    names = sorted(names if names is not None else model.params)
    numeric = finite_difference_gradients(model, batch, psi, names, h=h, loss_fn=loss_fn)
    worst = 0.0
    worst_name = None
    for name in names:
        a, f = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-4)
        err = float((np.abs(a - f) / denom).max()) if a.size else 0.0
        if err > worst:
            worst, worst_name = err, name
    return worst <= rtol, worst, worst_name


# ---------------------------------------------------------------------------
# training loops


def train(pairs, psi, model, config, vocab, out_dir=None, state=None,
          grad_check=False, log_hook=None):
    """Optimize `model` in place; returns the final TrainState.

    Bit-reproducible given (seed, configs, corpus): batch order is drawn
    from seed+epoch, so resuming from an epoch checkpoint replays the
    remaining epochs identically.
    """
    if state is None:
        state = TrainState()
    if grad_check:
        probe = make_batches(pairs[:2], batch_size=2, seed=config.seed)[0]
        ok, err, name = gradient_check(model, probe, psi)
        if not ok:
            raise TrainingError(f"gradient check failed: {name} rel err {err:.3g}")
    params = model.trainable_params()
    start_fp = model.provider.fingerprint() if model.provider else None
    for epoch in range(state.epoch, config.epochs):
        epoch_losses = []
        for batch in make_batches(pairs, config.batch_size, seed=config.seed + epoch):
            model.zero_grads()
            with ad.Tape() as tape:
                loss = model.forward_loss(batch, psi)
                tape.backward(loss)
            adam_step(params, state, config)
            value = float(loss.data)
            epoch_losses.append(value)
            if log_hook is not None:
                log_hook({"step": state.step, "epoch": epoch, "loss": value,
                          "lr": config.learning_rate,
                          "wall_ms": int(time.time() * 1000)})
        state.epoch = epoch + 1
        mean_loss = float(np.mean(epoch_losses))
        if mean_loss < state.best_loss:
            state.best_loss = mean_loss
            if out_dir is not None:
                save_checkpoint(f"{out_dir}/best.npz", model, vocab, psi, state, config)
        if out_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(f"{out_dir}/epoch{epoch + 1}.npz", model, vocab, psi, state, config)
    if start_fp is not None and model.provider.fingerprint() != start_fp:
        raise TrainingError("frozen provider parameters changed during training")
    if out_dir is not None:
        save_checkpoint(f"{out_dir}/final.npz", model, vocab, psi, state, config)
    return state


def pretrain_provider(lm, pairs, epochs=5, learning_rate=1e-3, seed=0):
    """Brief next-token pretraining of the general-LM provider, then freeze."""
    config = TrainConfig(epochs=1, learning_rate=learning_rate, seed=seed)
    state = TrainState()
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for idx in order:
            essay = pairs[idx].essay
            if len(essay) < 2:
                continue
            ids = np.asarray(essay[:-1], dtype=np.int64)
            targets = np.asarray(essay[1:], dtype=np.int64)
            for t in lm.params.values():
                t.grad = None
            with ad.Tape() as tape:
                logp = ad.log_softmax(lm.logits(ids), axis=-1)
                picked = ad.mul(logp, ad.constant(_one_hot(targets, lm.config.vocab_size)))
                loss = ad.scale(ad.tsum(picked), -1.0 / len(targets))
                tape.backward(loss)
            adam_step(lm.params, state, config)
    lm.freeze()
    return lm


def _one_hot(ids, n):
    out = np.zeros((len(ids), n))
    out[np.arange(len(ids)), ids] = 1.0
    return out
