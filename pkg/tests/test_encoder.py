"""Shared encoder: shape contracts, determinism, masking, state files."""

import numpy as np
import pytest

from xlrc import tensor as T
from xlrc.corpus import (CLS_TOKEN, PAD_ID, SEP_TOKEN, TokenSequence)
from xlrc.encoder import (EncodedBatch, EncoderConfig, EncoderParams, encode,
                          encode_batch, encode_ids, load_precomputed,
                          save_precomputed)
from xlrc.gradcheck import check_gradients
from xlrc.tensor import ContractError, ShapeError, Tensor


def make_params(vocab=10, h=8, layers=2, heads=2, max_pos=16, seed=0):
    cfg = EncoderConfig(vocab_size=vocab, hidden_dim=h, num_layers=layers,
                        num_heads=heads, max_position=max_pos)
    return EncoderParams.init(cfg, np.random.default_rng(seed))


def make_seq(tokens, ids):
    return TokenSequence(
        tokens=[CLS_TOKEN] + tokens + [SEP_TOKEN, SEP_TOKEN],
        token_ids=ids,
        segment_ids=[0] * len(ids),
        passage_token_range=(1, len(ids) - 1),
    )


class TestEncode:
    def test_single_token_shape(self):
        params = make_params()
        out = encode_ids([4], params)
        assert out.shape == (1, 8)

    def test_zero_layers_is_embedding_sum(self):
        params = make_params(layers=0)
        ids = [3, 1, 4]
        out = encode_ids(ids, params)
        expect = params.token_emb.values[ids] + params.pos_emb.values[:3]
        np.testing.assert_array_equal(out.values, expect)

    def test_deterministic(self):
        params = make_params()
        ids = [2, 5, 7, 1]
        a = encode_ids(ids, params).values
        b = encode_ids(ids, params).values
        assert np.array_equal(a, b)

    def test_language_identity_is_tokens_only(self):
        # same ids under different nominal languages encode identically
        params = make_params()
        seq_zh = make_seq(["他"], [2, 4, 3, 3])
        seq_en = make_seq(["he"], [2, 4, 3, 3])
        np.testing.assert_array_equal(encode(seq_zh, params).values,
                                      encode(seq_en, params).values)

    def test_id_out_of_range(self):
        with pytest.raises(ContractError, match="out of range"):
            encode_ids([11], make_params(vocab=10))

    def test_too_long(self):
        with pytest.raises(ContractError, match="max_position"):
            encode_ids(list(range(5)) * 4, make_params(max_pos=16))

    def test_all_pad_rows_are_finite(self):
        params = make_params()
        ids = [PAD_ID] * 4
        out = encode_ids(ids, params, pad_mask=np.ones(4, dtype=bool))
        assert np.isfinite(out.values).all()

    def test_pad_keys_do_not_leak_into_other_rows(self):
        params = make_params()
        ids = [2, 5, 7]
        base = encode_ids(ids + [PAD_ID], params,
                          pad_mask=np.array([0, 0, 0, 1], dtype=bool))
        other = encode_ids(ids + [PAD_ID], params,
                           pad_mask=np.array([0, 0, 0, 1], dtype=bool))
        np.testing.assert_array_equal(base.values[:3], other.values[:3])
        # changing the PAD row's embedding id must not affect real rows
        swapped = encode_ids(ids + [ids[0]], params,
                             pad_mask=np.array([0, 0, 0, 1], dtype=bool))
        np.testing.assert_allclose(swapped.values[:3], base.values[:3],
                                   atol=1e-12)

    def test_gradients_flow_to_embeddings(self):
        params = make_params(vocab=8, h=8, layers=2, heads=2, seed=3)
        ids = [1, 5, 2]

        def build_loss():
            out = encode_ids(ids, params)
            return T.sum_all(T.mul(out, out))

        report = check_gradients(build_loss, {"token_emb": params.token_emb},
                                 max_entries=24,
                                 rng=np.random.default_rng(0))
        assert report.ok, "\n".join(report.failures)


class TestEncodeBatch:
    def test_monolingual_degenerate(self):
        params = make_params()
        batch = encode_batch(make_seq(["x"], [2, 4, 3, 3]), {}, params)
        assert batch.sources == {}
        assert batch.target.shape == (4, 8)

    def test_shape_contract(self):
        params = make_params(vocab=12, h=16, max_pos=16)
        target = make_seq([], [2] + [4] * 5 + [3])
        sources = {
            "en": make_seq([], [2] + [5] * 7 + [3]),
            "ja": make_seq([], [2] + [6] * 6 + [3]),
        }
        batch = encode_batch(target, sources, params)
        assert batch.target.shape == (7, 16)
        assert batch.sources["en"].shape == (9, 16)
        assert batch.sources["ja"].shape == (8, 16)
        assert batch.source_lens == {"en": 9, "ja": 8}

    def test_bit_identical_across_calls(self):
        params = make_params()
        target = make_seq([], [2, 5, 3, 3])
        sources = {"en": make_seq([], [2, 6, 6, 3])}
        a = encode_batch(target, sources, params)
        b = encode_batch(target, sources, params)
        assert np.array_equal(a.target.values, b.target.values)
        assert np.array_equal(a.sources["en"].values, b.sources["en"].values)


class TestPrecomputedStates:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "states.jsonl"
        rng = np.random.default_rng(0)
        states = {"zh": rng.standard_normal((4, 6)),
                  "en": rng.standard_normal((5, 6))}
        save_precomputed(path, [("ex1", "zh", states)])
        batch = load_precomputed(path, "ex1")
        np.testing.assert_array_equal(batch.target.values, states["zh"])
        np.testing.assert_array_equal(batch.sources["en"].values, states["en"])

    def test_missing_id(self, tmp_path):
        path = tmp_path / "states.jsonl"
        save_precomputed(path, [("ex1", "zh", {"zh": np.zeros((2, 4))})])
        with pytest.raises(ValueError, match="ghost"):
            load_precomputed(path, "ghost")

    def test_hidden_size_mismatch(self, tmp_path):
        path = tmp_path / "states.jsonl"
        save_precomputed(path, [("ex1", "zh", {"zh": np.zeros((2, 16)),
                                               "en": np.zeros((3, 32))})])
        with pytest.raises(ShapeError, match="h=16"):
            load_precomputed(path, "ex1")

    def test_explicit_target_lang(self, tmp_path):
        path = tmp_path / "states.jsonl"
        save_precomputed(path, [("ex1", "zh", {"zh": np.zeros((2, 4)),
                                               "en": np.ones((3, 4))})])
        batch = load_precomputed(path, "ex1", target_lang="en")
        assert batch.target.shape == (3, 4)
        assert set(batch.sources) == {"zh"}


class TestEncodedBatch:
    def test_rejects_mixed_hidden_sizes(self):
        with pytest.raises(ShapeError):
            EncodedBatch(target=Tensor(np.zeros((3, 8))),
                         sources={"en": Tensor(np.zeros((4, 16)))})
