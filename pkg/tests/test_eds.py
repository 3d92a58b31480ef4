import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etf2d.eds import (CodecConfig, Codeword, code_bits, decode, decode_codes, decoded_moments,
                       encode, enumerate_decoded, flip_codes, quantize, transmit_bsc)
from etf2d.errors import ConfigurationError


def codec(Z=1.0, L=2, rho=0.0):
    return CodecConfig([Z], [L], [rho])


def test_levels_z1_l2():
    assert np.allclose(codec().levels(0), [-1, -1 / 3, 1 / 3, 1])


@pytest.mark.parametrize("kw,path", [
    (dict(Z=[0.0], L=[2], crossover=[0.1]), "codec.Z"),
    (dict(Z=[1.0], L=[0], crossover=[0.1]), "codec.L"),
    (dict(Z=[1.0], L=[63], crossover=[0.1]), "codec.L"),
    (dict(Z=[1.0], L=[2], crossover=[1.5]), "codec.crossover"),
])
def test_invalid_codec(kw, path):
    with pytest.raises(ConfigurationError, match=path):
        CodecConfig(**kw)


def test_top_level_is_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cw, level = encode(codec(), 0, 1.0, rng)
        assert level == 1.0
        assert cw.bits == (1, 1)


def test_midpoint_is_unbiased_two_point():
    rng = np.random.default_rng(1)
    code, level, _ = quantize(codec(), 0, np.zeros(200_000), rng)
    assert np.allclose(np.unique(level), [-1 / 3, 1 / 3])
    # Two-point distribution with p = 1/2: mean 0, sd 1/3.
    assert abs(level.mean()) < 4 * (1 / 3) / np.sqrt(level.size)


def test_value_on_level_is_exact():
    rng = np.random.default_rng(2)
    cfg = codec(Z=1.0, L=3)
    lv = cfg.levels(0)
    _, q, _ = quantize(cfg, 0, np.repeat(lv, 50), rng)
    assert np.array_equal(q, np.repeat(lv, 50))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        encode(codec(), 0, np.nan, np.random.default_rng(0))


def test_out_of_range_clamped_and_counted():
    _, q, clamped = quantize(codec(), 0, np.array([-3.0, 0.2, 5.0]), np.random.default_rng(0))
    assert list(clamped) == [True, False, True]
    assert q[0] == -1.0 and q[2] == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.0, 1.0), st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_quantizer_picks_bracketing_level(y, L, seed):
    cfg = codec(L=L)
    _, q, _ = quantize(cfg, 0, np.array(y), np.random.default_rng(seed))
    assert abs(float(q) - y) <= cfg.delta(0) * (1 + 1e-12)


def test_truncation_moments():
    rng = np.random.default_rng(3)
    cfg = codec(Z=2.0, L=4)
    y = rng.uniform(-2, 2, 1_000_000)
    _, q, _ = quantize(cfg, 0, y, rng)
    err = q - y
    assert abs(err.mean()) < 1e-3 * cfg.delta(0)
    assert err.var() <= cfg.truncation_bound(0) * 1.01


def test_bsc_extremes():
    rng = np.random.default_rng(0)
    cw = Codeword((1, 0, 1))
    assert transmit_bsc(CodecConfig([1], [3], [0.0]), 0, cw, rng) == cw
    assert transmit_bsc(CodecConfig([1], [3], [1.0]), 0, cw, rng).bits == (0, 1, 0)


def test_bsc_flip_rate_binomial():
    rho, L, T = 0.17, 8, 125_000
    cfg = CodecConfig([1.0], [L], [rho])
    rng = np.random.default_rng(4)
    sent = rng.integers(0, 2 ** L, T)
    flips = code_bits(sent ^ flip_codes(cfg, 0, sent, rng), L)
    n = flips.size      # 10^6 bit transmissions
    assert abs(flips.mean() - rho) < 3 * np.sqrt(rho * (1 - rho) / n)


def test_decode_hand_values():
    cfg = codec()
    assert decode(cfg, 0, Codeword((1, 1))) == pytest.approx(1.0)
    assert decode(cfg, 0, Codeword((0, 0))) == -1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-3.0, 3.0), st.integers(1, 20), st.integers(0, 2 ** 32 - 1))
def test_round_trip_without_channel(y, L, seed):
    cfg = codec(Z=3.0, L=L)
    rng = np.random.default_rng(seed)
    cw, level = encode(cfg, 0, y, rng)
    assert len(cw) == L
    assert decode(cfg, 0, transmit_bsc(cfg, 0, cw, rng)) == pytest.approx(level, abs=1e-12)
    assert Codeword.from_int(cw.to_int(), L) == cw


def test_decode_codes_matches_bitwise_decode():
    cfg = codec(Z=2.5, L=6)
    for c in range(64):
        assert decode_codes(cfg, 0, c) == pytest.approx(decode(cfg, 0, Codeword.from_int(c, 6)))


def test_decoded_moments_hand_values():
    assert decoded_moments(codec(rho=0.0), 0, 0.4) == (0.4, 0.0)
    mean, var = decoded_moments(codec(Z=1.0, L=1, rho=0.5), 0, 1.0)
    assert mean == 0.0 and var == pytest.approx(1.0)


@pytest.mark.parametrize("L,rho", list(itertools.product([1, 2, 3, 5, 8],
                                                         [0.0, 0.05, 0.3, 0.5, 1.0])))
def test_enumeration_oracle(L, rho):
    cfg = CodecConfig([1.7], [L], [rho])
    _, var = decoded_moments(cfg, 0, 0.0)
    for c in range(2 ** L):
        q = -1.7 + c * cfg.delta(0)
        m1, v, per_bit = enumerate_decoded(cfg, 0, c)
        assert abs(m1 - (1 - 2 * rho) * q) <= 1e-12
        assert abs(v - var) <= 1e-12
        assert abs(per_bit - var) <= 1e-12


def test_monte_carlo_mean_for_long_words():
    cfg = CodecConfig([1.0], [20], [0.2])
    rng = np.random.default_rng(5)
    code = np.full(400_000, 123_456)
    out = decode_codes(cfg, 0, flip_codes(cfg, 0, code, rng))
    mean, var = decoded_moments(cfg, 0, decode_codes(cfg, 0, 123_456))
    assert abs(out.mean() - mean) < 4 * np.sqrt(var / out.size)


@pytest.mark.parametrize("L", range(1, 30))
def test_step_shrinks_with_bits(L):
    assert codec(L=L + 1).delta(0) / codec(L=L).delta(0) == pytest.approx(
        (2 ** L - 1) / (2 ** (L + 1) - 1))
    assert codec(L=L + 1).delta(0) < codec(L=L).delta(0)
