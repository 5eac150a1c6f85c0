import math

import numpy as np
import pytest

from semcom import tensor as T
from semcom import transceiver as tx
from semcom import textdata as td


def tiny_config(vocab=20, units=4):
    return tx.TransceiverConfig(vocab_size=vocab, num_enc_layers=2, num_dec_layers=2,
                                model_dim=16, num_heads=2, ffn_dim=32,
                                channel_units=units, chan_hidden=12, dropout_rate=0.1)


def batch_of(sentences, vocab):
    return td.make_batch(sentences, vocab)


@pytest.fixture()
def setup():
    sentences = [["alpha", "beta", "gamma", "delta"],
                 ["beta", "gamma", "alpha", "delta", "epsilon", "zeta"]]
    vocab = td.build_vocab(sentences)
    config = tiny_config(vocab=vocab.size)
    params = tx.init_params(config, seed=0)
    return sentences, vocab, config, params


class TestConfig:
    def test_head_divisibility_enforced(self):
        with pytest.raises(ValueError):
            tx.TransceiverConfig(vocab_size=10, model_dim=100, num_heads=8)

    def test_channel_units_must_be_even(self):
        with pytest.raises(ValueError):
            tx.TransceiverConfig(vocab_size=10, channel_units=15)

    def test_symbols_per_word(self):
        assert tx.TransceiverConfig(vocab_size=10, channel_units=16).symbols_per_word == 8


class TestSemanticEncode:
    def test_output_shape_table_width(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        out = tx.semantic_encode(params, batch)
        assert out.shape == (2, batch.length, config.model_dim)

    def test_full_width_configuration(self):
        vocab = td.build_vocab([["w1", "w2", "w3", "w4"]])
        config = tx.TransceiverConfig(vocab_size=vocab.size)
        params = tx.init_params(config, seed=1)
        batch = batch_of([["w1", "w2", "w3", "w4"]], vocab)
        assert tx.semantic_encode(params, batch).shape == (1, 6, 128)

    def test_pad_positions_do_not_leak(self, setup):
        sentences, vocab, config, params = setup
        single = batch_of([sentences[0]], vocab)
        padded = batch_of(sentences, vocab)
        alone = tx.semantic_encode(params, single)
        together = tx.semantic_encode(params, padded)
        np.testing.assert_allclose(together.data[0, :single.length],
                                   alone.data[0], rtol=1e-5, atol=1e-6)

    def test_batch_row_permutation_equivariance(self, setup):
        sentences, vocab, config, params = setup
        fwd = tx.semantic_encode(params, batch_of(sentences, vocab))
        rev = tx.semantic_encode(params, batch_of(sentences[::-1], vocab))
        np.testing.assert_allclose(fwd.data[0], rev.data[1], rtol=1e-5, atol=1e-6)

    def test_masked_attention_weight_is_exactly_zero(self):
        valid = np.array([[True, True, False]])
        mask = tx.attention_mask(valid, num_heads=1, query_len=3)
        scores = T.Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32)) + mask
        weights = T.softmax(scores, axis=-1)
        assert np.all(weights.data[..., -1] == 0.0)

    def test_rejects_out_of_vocab_indices(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of([sentences[0]], vocab)
        batch.tokens[0, 1] = config.vocab_size + 5
        with pytest.raises(ValueError):
            tx.semantic_encode(params, batch)


class TestChannelCodecs:
    def test_unit_power_after_normalization(self, setup):
        sentences, vocab, config, params = setup
        block = tx.transmit_features(params, batch_of(sentences, vocab))
        assert block.power() == pytest.approx(1.0, abs=1e-3)

    def test_symbol_count_per_word(self, setup):
        sentences, vocab, config, params = setup
        block = tx.transmit_features(params, batch_of(sentences, vocab))
        assert block.symbols_per_word == config.channel_units // 2

    def test_scale_invariance_of_normalization(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        before = tx.transmit_features(params, batch)
        for part in ("w", "b"):
            params[f"chan_enc.fc2.{part}"].data *= 2.0
        after = tx.transmit_features(params, batch)
        np.testing.assert_allclose(after.re.data, before.re.data, rtol=1e-5, atol=1e-6)

    def test_all_zero_block_flagged_degenerate(self, setup):
        sentences, vocab, config, params = setup
        params["chan_enc.fc2.w"].data[:] = 0.0
        params["chan_enc.fc2.b"].data[:] = 0.0
        block = tx.transmit_features(params, batch_of(sentences, vocab))
        assert block.degenerate
        assert not block.re.data.any()

    def test_channel_decode_shape_and_determinism(self, setup):
        sentences, vocab, config, params = setup
        block = tx.transmit_features(params, batch_of(sentences, vocab))
        a = tx.channel_decode(params, block)
        b = tx.channel_decode(params, block)
        assert a.shape == (2, block.shape[1], config.model_dim)
        np.testing.assert_array_equal(a.data, b.data)

    def test_channel_decode_zero_input_finite(self, setup):
        _, _, config, params = setup
        from semcom.blocks import ComplexSymbolBlock
        zeros = T.Tensor(np.zeros((1, 3, config.channel_units // 2), dtype=np.float32))
        out = tx.channel_decode(params, ComplexSymbolBlock(zeros, zeros))
        assert np.all(np.isfinite(out.data))


class TestSemanticDecode:
    def test_logit_shape(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        memory = tx.semantic_encode(params, batch)
        dec_in = batch.tokens[:, :-1]
        logits = tx.semantic_decode_train(params, memory, dec_in, batch.pad_mask)
        assert logits.shape == (2, batch.length - 1, config.vocab_size)

    def test_causal_mask_blocks_future(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        memory = tx.semantic_encode(params, batch)
        dec_in = batch.tokens[:, :-1].copy()
        base = tx.semantic_decode_train(params, memory, dec_in, batch.pad_mask)
        dec_in2 = dec_in.copy()
        dec_in2[:, -1] = (dec_in2[:, -1] + 1) % config.vocab_size
        changed = tx.semantic_decode_train(params, memory, dec_in2, batch.pad_mask)
        np.testing.assert_allclose(base.data[:, :-1], changed.data[:, :-1],
                                   rtol=1e-5, atol=1e-6)

    def test_cross_attention_ignores_pad_source(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        memory = tx.semantic_encode(params, batch)
        dec_in = batch.tokens[:, :-1]
        base = tx.semantic_decode_train(params, memory, dec_in, batch.pad_mask)
        poked = T.Tensor(memory.data.copy())
        poked.data[~batch.pad_mask] += 37.0
        changed = tx.semantic_decode_train(params, poked, dec_in, batch.pad_mask)
        np.testing.assert_allclose(base.data, changed.data, rtol=1e-5, atol=1e-6)


class TestGreedyDecode:
    def test_end_at_step_one_gives_empty_sentence(self, setup, monkeypatch):
        _, _, config, params = setup
        def rigged(params_, memory_, dec_input, src_valid, train=False, rng=None):
            logits = np.zeros(dec_input.shape + (config.vocab_size,), dtype=np.float32)
            logits[..., td.END] = 10.0
            return T.Tensor(logits)
        monkeypatch.setattr(tx, "semantic_decode_train", rigged)
        memory = T.Tensor(np.zeros((1, 4, config.model_dim), dtype=np.float32))
        assert tx.greedy_decode(params, memory, max_len=5) == [[]]

    def test_fixed_argmax_sequence_reproduced(self, setup, monkeypatch):
        _, _, config, params = setup
        plan = [7, 9, 5, td.END]
        def rigged(params_, memory_, dec_input, src_valid, train=False, rng=None):
            step = dec_input.shape[1] - 1
            logits = np.zeros(dec_input.shape + (config.vocab_size,), dtype=np.float32)
            logits[:, -1, plan[min(step, len(plan) - 1)]] = 10.0
            return T.Tensor(logits)
        monkeypatch.setattr(tx, "semantic_decode_train", rigged)
        memory = T.Tensor(np.zeros((1, 4, config.model_dim), dtype=np.float32))
        assert tx.greedy_decode(params, memory, max_len=10) == [[7, 9, 5]]

    def test_max_len_stops_unending_decoder(self, setup, monkeypatch):
        _, _, config, params = setup
        def rigged(params_, memory_, dec_input, src_valid, train=False, rng=None):
            logits = np.zeros(dec_input.shape + (config.vocab_size,), dtype=np.float32)
            logits[..., 5] = 10.0
            return T.Tensor(logits)
        monkeypatch.setattr(tx, "semantic_decode_train", rigged)
        memory = T.Tensor(np.zeros((2, 4, config.model_dim), dtype=np.float32))
        out = tx.greedy_decode(params, memory, max_len=6)
        assert out == [[5] * 6, [5] * 6]


class TestEndToEndGradients:
    def test_all_parameter_gradients_finite(self, setup):
        sentences, vocab, config, params = setup
        batch = batch_of(sentences, vocab)
        rng = np.random.default_rng(0)
        memory = tx.semantic_encode(params, batch, train=True, rng=rng)
        block = tx.channel_encode(params, memory)
        recovered = tx.channel_decode(params, block)
        logits = tx.semantic_decode_train(params, recovered, batch.tokens[:, :-1],
                                          batch.pad_mask, train=True, rng=rng)
        loss = T.tmean(logits * logits)
        loss.backward()
        for name, p in params.params.items():
            assert p.grad is not None, name
            assert np.all(np.isfinite(p.grad)), name

    def test_finite_difference_spot_checks(self, setup):
        sentences, vocab, config, params = setup
        for p in params.params.values():
            p.data = p.data.astype(np.float64)
        batch = batch_of(sentences, vocab)

        def loss_value():
            memory = tx.semantic_encode(params, batch)
            block = tx.channel_encode(params, memory)
            recovered = tx.channel_decode(params, block)
            logits = tx.semantic_decode_train(params, recovered, batch.tokens[:, :-1],
                                              batch.pad_mask)
            return T.tmean(logits * logits)

        loss = loss_value()
        loss.backward()
        rng = np.random.default_rng(3)
        h = 1e-5
        for name in ("embedding.table", "enc.0.attn.wq", "chan_enc.fc1.w",
                     "chan_dec.fc2.w", "dec.1.cross.wv", "pred.w"):
            p = params[name]
            flat = p.data.reshape(-1)
            idx = int(rng.integers(flat.size))
            orig = flat[idx]
            flat[idx] = orig + h
            up = float(loss_value().data)
            flat[idx] = orig - h
            down = float(loss_value().data)
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            analytic = p.grad.reshape(-1)[idx]
            assert analytic == pytest.approx(fd, rel=2e-3, abs=1e-7), name


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, setup, tmp_path):
        _, _, config, params = setup
        first = tmp_path / "a.dsc1"
        second = tmp_path / "b.dsc1"
        tx.save_checkpoint(first, params)
        loaded = tx.load_checkpoint(first)
        tx.save_checkpoint(second, loaded)
        assert first.read_bytes() == second.read_bytes()
        for name in params.names():
            np.testing.assert_array_equal(loaded[name].data, params[name].data)
        assert loaded.config == config

    def test_magic_and_version_checked(self, tmp_path):
        bad = tmp_path / "bad.dsc1"
        bad.write_bytes(b"NOPE" + bytes([1]))
        with pytest.raises(tx.CheckpointError):
            tx.load_checkpoint(bad)

    def test_header_layout(self, setup, tmp_path):
        _, _, _, params = setup
        path = tmp_path / "c.dsc1"
        tx.save_checkpoint(path, params)
        blob = path.read_bytes()
        assert blob[:4] == b"DSC1"
        assert blob[4] == 1


class TestGrouping:
    def test_groups_partition_parameters(self, setup):
        _, _, _, params = setup
        names = set(params.names())
        grouped = set()
        for g in tx.GROUPS:
            members = params.group_names([g])
            assert not (set(members) & grouped)
            grouped.update(members)
        assert grouped == names

    def test_trainable_excludes_frozen(self, setup):
        _, _, _, params = setup
        trainable = [n for n, _ in params.trainable(frozen={"alpha", "delta"})]
        assert not any(n.startswith(("chan_enc.", "chan_dec.")) for n in trainable)
        assert any(n.startswith("enc.") for n in trainable)
