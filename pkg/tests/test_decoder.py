import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_model
from molvit import tensor as T
from molvit.decoder import causal_mask, decode_forward, sinusoidal_pe
from molvit.errors import ConfigError, ShapeError
from molvit.model import ModelConfig
from molvit.tensor import Tensor


def test_pe_position_zero():
    pe = sinusoidal_pe(10, 16)
    np.testing.assert_array_equal(pe[0, 0::2], 0.0)
    np.testing.assert_array_equal(pe[0, 1::2], 1.0)


def test_pe_hand_values():
    pe = sinusoidal_pe(10, 8)
    assert pe[1, 0] == pytest.approx(0.841471, abs=1e-6)
    assert pe[3, 5] == pytest.approx(math.cos(3 / 10000 ** (4 / 8)), abs=1e-12)
    assert np.all(np.abs(pe) <= 1.0)


def test_pe_rows_pairwise_distinct():
    pe = sinusoidal_pe(300, 512)
    d = ((pe[:, None, :] - pe[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1e-6


def test_pe_odd_dim_rejected():
    with pytest.raises(ConfigError):
        sinusoidal_pe(10, 7)


def test_causal_mask_examples():
    assert causal_mask(1).tolist() == [[True]]
    assert causal_mask(3).tolist() == [[True, False, False], [True, True, False], [True, True, True]]
    m = causal_mask(9)
    assert m.sum(1).tolist() == list(range(1, 10))


def model(dec_layers=2, vocab=11, max_len=20, seed=0):
    cfg = ModelConfig.build(vocab, image_size=32, patch_size=16, dim=8, enc_layers=1, dec_layers=dec_layers,
                            heads=2, dropout=0.0, max_len=max_len)
    return random_model(cfg, seed)


def memory_for(m, seed=0):
    return m.encode(np.random.default_rng(seed).random((32, 32, 1)).astype(np.float32))


def test_zero_layers_is_projection_of_embedding():
    m = model(dec_layers=0)
    toks = [1, 4, 7, 3]
    got = m.decode(toks, memory_for(m)).data
    w = m.weights
    x = w["decoder.embed"].data[toks] + sinusoidal_pe(20, 8)[:4]
    np.testing.assert_allclose(got, x @ w["decoder.out.w"].data + w["decoder.out.b"].data, atol=1e-5)


def test_output_shape_and_batching():
    m = model(vocab=275, max_len=12)
    mem = memory_for(m)
    toks = np.random.default_rng(1).integers(0, 275, size=10)
    out = m.decode(toks, mem).data
    assert out.shape == (10, 275)
    batched = m.decode(np.stack([toks, toks]), Tensor(np.stack([mem.data, mem.data]))).data
    np.testing.assert_allclose(batched[1], out, atol=1e-5)


def test_over_max_len_rejected():
    m = model(max_len=5)
    with pytest.raises(ShapeError):
        m.decode([1] * 6, memory_for(m))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.data())
def test_changing_a_token_leaves_earlier_rows_bit_identical(t, data):
    m = model()
    mem = memory_for(m)
    rng = np.random.default_rng(t)
    toks = rng.integers(0, 11, size=t)
    pos = data.draw(st.integers(0, t - 1))
    base = m.decode(toks, mem).data
    toks2 = toks.copy()
    toks2[pos] = (toks2[pos] + 1) % 11
    moved = m.decode(toks2, mem).data
    np.testing.assert_array_equal(moved[:pos], base[:pos])
    assert np.any(moved[pos] != base[pos])


def test_prefix_rows_agree_with_longer_sequence():
    m = model()
    mem = memory_for(m)
    toks = [1, 5, 6, 2, 9, 3, 3]
    full = m.decode(toks, mem).data
    for k in range(1, len(toks)):
        np.testing.assert_allclose(m.decode(toks[:k], mem).data, full[:k], atol=1e-5)


def test_memory_matters():
    m = model()
    toks = [1, 5, 6]
    mem = memory_for(m)
    other = m.decode(toks, Tensor(np.zeros_like(mem.data))).data
    assert np.abs(other - m.decode(toks, mem).data).max() > 1e-3


def test_per_position_loop_oracle():
    # each row equals the last row of decoding its own prefix
    m = model(dec_layers=1)
    mem = memory_for(m)
    toks = [1, 3, 8, 4, 10]
    full = m.decode(toks, mem).data
    rows = np.stack([m.decode(toks[: i + 1], mem).data[-1] for i in range(len(toks))])
    np.testing.assert_allclose(full, rows, atol=1e-5)
