import numpy as np
import pytest

from refreader.encoder import (
    SEP_ID, ConfigError, EncoderConfig, SequenceTooLong, attention, build_input, encode, init_params,
    paragraph_offset,
)
from refreader.tensor import Tensor


def cfg(vocab=12, **kw):
    base = dict(num_layers=2, model_dim=8, num_heads=2, ffn_dim=16, max_positions=32, dropout_p=0.0)
    base.update(kw)
    return EncoderConfig(vocab, **base)


def test_attention_single_key_returns_value():
    v = Tensor([[1.5, -2.0, 3.0]])
    out = attention(Tensor([[0.3, 0.1]]), Tensor([[4.0, -1.0]]), v)
    np.testing.assert_array_equal(out.data, v.data)


def test_attention_equal_logits_average_values():
    q = Tensor(np.zeros((3, 2)))
    k = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    v = Tensor(np.arange(6.0).reshape(3, 2))
    np.testing.assert_allclose(attention(q, k, v).data, np.tile(v.data.mean(axis=0), (3, 1)), atol=1e-15)


def test_attention_rows_are_convex_combinations():
    rng = np.random.default_rng(1)
    q, k, v = (rng.normal(size=(3, 2)) for _ in range(3))
    w = np.exp(q @ k.T / np.sqrt(2))
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    out = attention(Tensor(q), Tensor(k), Tensor(v)).data
    np.testing.assert_allclose(out, w @ v, atol=1e-12)
    assert np.all(out >= v.min(axis=0) - 1e-12) and np.all(out <= v.max(axis=0) + 1e-12)


def test_input_layout():
    assert build_input([5, 6], [7, 8, 9]).tolist() == [5, 6, SEP_ID, 7, 8, 9]
    assert paragraph_offset(2) == 3


@pytest.mark.parametrize("nq,npara", [(1, 1), (3, 5), (2, 20)])
def test_row_count(nq, npara):
    c = cfg()
    h = encode([3] * nq, [4] * npara, init_params(c, np.random.default_rng(0)), c)
    assert h.shape == (nq + 1 + npara, c.model_dim)


def test_different_paragraphs_differ_beyond_question():
    c = cfg()
    params = init_params(c, np.random.default_rng(0))
    a = encode([3, 4], [5, 6, 7], params, c).data
    b = encode([3, 4], [8, 6, 7], params, c).data
    assert not np.allclose(a[3:], b[3:])


def test_relabeling_vocab_rows_and_ids_together_is_invariant():
    c = cfg()
    params = init_params(c, np.random.default_rng(2))
    # the separator id is fixed by the input layout, so it stays put
    perm = np.concatenate([[0, SEP_ID], 2 + np.random.default_rng(3).permutation(c.vocab_size - 2)])
    relabeled = dict(params)
    table = params["enc.tok_emb"].data
    new_table = np.empty_like(table)
    new_table[perm] = table
    relabeled["enc.tok_emb"] = Tensor(new_table)
    q, p = [3, 4], [5, 9, 2, 11]
    a = encode(q, p, params, c).data
    b = encode(perm[q].tolist(), perm[p].tolist(), relabeled, c).data
    np.testing.assert_array_equal(a, b)


def test_too_long_raises():
    c = cfg(max_positions=6)
    with pytest.raises(SequenceTooLong):
        encode([3, 3], [4, 4, 4, 4], init_params(c, np.random.default_rng(0)), c)


def test_bad_head_count():
    with pytest.raises(ConfigError):
        cfg(model_dim=9, num_heads=2)


def test_dropout_changes_output_only_in_training():
    c = cfg(dropout_p=0.3)
    params = init_params(c, np.random.default_rng(0))
    base = encode([3], [4, 5], params, c).data
    np.testing.assert_array_equal(base, encode([3], [4, 5], params, c, training=False).data)
    assert not np.allclose(base, encode([3], [4, 5], params, c, training=True, dropout_key=(1,)).data)
