import numpy as np
import pytest

from aspectforge import autograd as ag
from aspectforge.model import (
    Batch,
    Model,
    ModelConfig,
    ModelError,
    base_config,
    collate,
    embed,
    encoder_forward,
    init_params,
    param_count,
    param_shapes,
    toy_config,
)
from aspectforge.tokenizer import SPECIAL_TOKENS, Vocabulary, encode_pair
from oracles import manual_forward, tally_params
from support import toy_gradient_check


def small_batch(rng, cfg, B=3, n=10):
    ids = rng.integers(5, cfg.vocab_size, (B, n))
    mask = np.ones((B, n), dtype=np.int64)
    mask[1, 6:] = 0
    ids[mask == 0] = 0
    seg = np.zeros_like(ids)
    seg[:, 3:] = 1
    seg[mask == 0] = 0
    return Batch(ids, seg, mask)


class TestConfig:
    def test_toy_defaults(self):
        cfg = toy_config(100)
        assert (cfg.layers, cfg.heads, cfg.hidden, cfg.feed_forward, cfg.max_len) == (2, 4, 64, 256, 128)

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ModelError):
            ModelConfig(hidden=10, heads=4)

    def test_dict_round_trip(self):
        cfg = toy_config(77, 32, dropout=0.2)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestParamCount:
    def test_spec_toy_matches_tally(self):
        cfg = ModelConfig(layers=2, heads=2, hidden=32, feed_forward=128, vocab_size=100, max_len=32)
        assert param_count(cfg) == tally_params(100, 32, 128, 2, 32)

    @pytest.mark.parametrize("L,A,H,F,V,n", [(1, 1, 2, 3, 6, 4), (2, 4, 64, 256, 500, 128), (3, 2, 8, 5, 11, 9)])
    def test_matches_tally_and_init(self, L, A, H, F, V, n):
        cfg = ModelConfig(layers=L, heads=A, hidden=H, feed_forward=F, vocab_size=V, max_len=n)
        assert param_count(cfg) == tally_params(V, H, F, L, n)
        assert init_params(cfg, 0).size() == param_count(cfg)

    def test_base_near_110m(self):
        count = param_count(base_config())
        assert count == tally_params(30522, 768, 3072, 12, 512)
        assert abs(count - 110_000_000) / 110_000_000 < 0.05

    def test_doubling_layers(self):
        one = param_count(toy_config(100, layers=2))
        two = param_count(toy_config(100, layers=4))
        per_layer = tally_params(100, 64, 256, 1, 128) - tally_params(100, 64, 256, 0, 128)
        assert two - one == 2 * per_layer


class TestInit:
    def test_deterministic(self):
        cfg = toy_config(50, 16)
        a, b = init_params(cfg, 7), init_params(cfg, 7)
        for k in a:
            np.testing.assert_array_equal(a[k].data, b[k].data)

    def test_scales_and_biases(self):
        p = init_params(toy_config(50, 16), 0)
        for name, t in p.items():
            if name.endswith(".scale"):
                assert np.all(t.data == 1.0)
            elif name.endswith((".bias", ".shift")):
                assert np.all(t.data == 0.0)
            else:
                assert np.abs(t.data).max() <= 0.04

    def test_shapes(self):
        cfg = toy_config(50, 16)
        p = init_params(cfg, 0)
        assert {k: t.shape for k, t in p.items()} == dict(param_shapes(cfg))


class TestForward:
    def test_probabilities_sum_to_one(self):
        cfg = toy_config(40, 12)
        m = Model(cfg, seed=0)
        probs = m.predict_proba(small_batch(np.random.default_rng(0), cfg))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert probs.shape == (3, 7)

    def test_attention_rows_and_masked_keys(self):
        cfg = toy_config(40, 12)
        p = init_params(cfg, 0)
        batch = small_batch(np.random.default_rng(1), cfg)
        _, atts = encoder_forward(embed(batch, p, cfg), batch.attention_mask, p, cfg, return_attention=True)
        for a in atts:
            np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-9)
            assert np.all(a[1, :, :, 6:] == 0.0)

    def test_padding_invariance(self):
        cfg = toy_config(40, 16)
        m = Model(cfg, seed=0)
        batch = small_batch(np.random.default_rng(2), cfg)
        base = m.predict_proba(batch)
        rng = np.random.default_rng(5)
        for _ in range(20):
            ids = batch.ids.copy()
            pad = batch.attention_mask == 0
            ids[pad] = rng.integers(0, 40, pad.sum())
            seg = batch.segment_ids.copy()
            seg[pad] = rng.integers(0, 2, pad.sum())
            np.testing.assert_array_equal(m.predict_proba(Batch(ids, seg, batch.attention_mask))[1], base[1])

    def test_segment_is_additive(self):
        cfg = toy_config(40, 12)
        p = init_params(cfg, 3)
        batch = small_batch(np.random.default_rng(0), cfg)
        full = embed(batch, p, cfg, normalize=False).data
        p["embeddings.segment"].data[...] = 0.0
        without = embed(batch, p, cfg, normalize=False).data
        np.testing.assert_allclose(full - without, init_params(cfg, 3)["embeddings.segment"].data[batch.segment_ids])

    def test_rejects_long_sequence(self):
        cfg = toy_config(40, 8)
        with pytest.raises(ModelError):
            Model(cfg).forward(Batch(np.zeros((1, 9), int), np.zeros((1, 9), int), np.ones((1, 9), int)))

    def test_rejects_bad_ids(self):
        cfg = toy_config(40, 8)
        with pytest.raises(ModelError):
            Model(cfg).forward(Batch(np.full((1, 4), 40), np.zeros((1, 4), int), np.ones((1, 4), int)))

    def test_manual_forward_oracle(self):
        cfg = ModelConfig(layers=1, heads=1, hidden=2, feed_forward=3, vocab_size=6, max_len=4, dropout=0.0)
        rng = np.random.default_rng(11)
        p = init_params(cfg, 0)
        for name, t in p.items():
            t.data[...] = np.round(rng.uniform(-1, 1, t.shape), 2)
        ids = np.array([[2, 5, 4, 0]])
        seg = np.array([[0, 0, 1, 0]])
        mask = np.array([[1, 1, 1, 0]])
        got = Model(cfg, p).forward(Batch(ids, seg, mask)).logits.data[0]
        want = manual_forward(ids[0], seg[0], mask[0], p.arrays(), 1, 1, cfg.layer_norm_eps)
        np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)

    def test_manual_forward_two_heads_two_layers(self):
        cfg = ModelConfig(layers=2, heads=2, hidden=4, feed_forward=5, vocab_size=9, max_len=6, dropout=0.0)
        rng = np.random.default_rng(12)
        p = init_params(cfg, 0)
        for name, t in p.items():
            t.data[...] = rng.normal(0, 0.5, t.shape)
        ids = np.array([[2, 7, 4, 8, 4, 0]])
        seg = np.array([[0, 0, 0, 1, 1, 0]])
        mask = np.array([[1, 1, 1, 1, 1, 0]])
        got = Model(cfg, p).forward(Batch(ids, seg, mask)).logits.data[0]
        want = manual_forward(ids[0], seg[0], mask[0], p.arrays(), 2, 2, cfg.layer_norm_eps)
        np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)

    def test_collate_trim(self):
        v = Vocabulary(list(SPECIAL_TOKENS) + ["a", "b"])
        pairs = [encode_pair("a b", "a", v, 16), encode_pair("a", "b", v, 16)]
        assert collate(pairs).shape == (2, 16)
        assert collate(pairs, trim=True).shape == (2, 6)


class TestGradients:
    def test_finite_differences(self):
        worst, per_group = toy_gradient_check(n_coords=200)
        assert len(per_group) == len(param_shapes(toy_config(60, 16)))
        assert worst < 1e-4, sorted(per_group.items(), key=lambda kv: -kv[1])[:3]

    def test_key_bias_gradient_vanishes(self):
        # adding a constant to every key shifts each score row uniformly
        cfg = toy_config(40, 12, dropout=0.0)
        p = init_params(cfg, 0)
        for name, t in p.items():
            t.data[...] += np.random.default_rng(len(name)).normal(0, 0.3, t.shape)
        m = Model(cfg, p)
        batch = small_batch(np.random.default_rng(0), cfg)
        ag.backward(ag.cross_entropy(m.forward(batch).logits, np.array([0, 1, 2])))
        for i in range(cfg.layers):
            assert np.abs(p[f"layers.{i}.attention.key.bias"].grad).max() < 1e-12
            assert np.abs(p[f"layers.{i}.attention.query.bias"].grad).max() > 1e-6

    def test_padding_token_gradient_is_zero(self):
        cfg = toy_config(40, 12, dropout=0.0)
        m = Model(cfg, seed=0)
        ids = np.array([[2, 7, 8, 4, 9, 4, 0, 0, 0, 0], [2, 10, 4, 11, 4, 12, 13, 14, 15, 16]])
        mask = np.array([[1] * 6 + [0] * 4, [1] * 10])
        seg = np.zeros_like(ids)
        loss = ag.cross_entropy(m.forward(Batch(ids, seg, mask)).logits, np.array([1, 2]))
        ag.backward(loss)
        g = m.params["embeddings.token"].grad
        # [PAD] occurs only at masked positions; its row never reaches the output
        assert np.all(g[0] == 0.0)
        assert np.any(g[7] != 0.0)
