"""Probabilistic uniform quantizer, binary symmetric channel, and decoder.

Levels are ``-Z + c * Delta`` for ``c = 0 .. 2**L - 1`` with
``Delta = 2Z / (2**L - 1)``.  A codeword is the binary expansion of ``c``,
least-significant bit first.  All array functions broadcast over leading axes.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

MAX_BITS = 62


@dataclass(frozen=True)
class CodecConfig:
    Z: Sequence[float]
    L: Sequence[int]
    crossover: Sequence[float]

    def __post_init__(self):
        Z = tuple(float(z) for z in self.Z)
        L = tuple(int(v) for v in self.L)
        rho = tuple(float(r) for r in self.crossover)
        if not (len(Z) == len(L) == len(rho)):
            raise ConfigurationError("Z, L and crossover need one entry per channel", "codec")
        for s in range(len(Z)):
            if not Z[s] > 0:
                raise ConfigurationError("sensor range must be positive", f"codec.Z[{s}]")
            if not 1 <= L[s] <= MAX_BITS:
                raise ConfigurationError(f"bit length must be in [1, {MAX_BITS}]", f"codec.L[{s}]")
            if not 0.0 <= rho[s] <= 1.0:
                raise ConfigurationError("crossover probability must be in [0, 1]",
                                         f"codec.crossover[{s}]")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "crossover", rho)

    @property
    def channels(self):
        return len(self.Z)

    def delta(self, s):
        return 2.0 * self.Z[s] / (2.0 ** self.L[s] - 1.0)

    def levels(self, s):
        return -self.Z[s] + np.arange(2 ** self.L[s]) * self.delta(s)

    def truncation_bound(self, s):
        """Upper bound Delta^2 / 4 on the truncation-error second moment."""
        return self.delta(s) ** 2 / 4.0

    def flip_variance(self, s):
        """Decoded-output variance constant contributed by bit flips."""
        return decoded_moments(self, s, 0.0)[1]


@dataclass(frozen=True)
class Codeword:
    bits: tuple          # least-significant first

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("codeword bits must be 0 or 1")

    def __len__(self):
        return len(self.bits)

    @classmethod
    def from_int(cls, code, L):
        return cls(tuple((int(code) >> nu) & 1 for nu in range(L)))

    def to_int(self):
        return sum(b << nu for nu, b in enumerate(self.bits))

    def __str__(self):
        return "".join(str(b) for b in self.bits)


def quantize(cfg, s, y, rng):
    """Vectorized probabilistic quantizer.

    Returns ``(code, q_level, clamped)`` with integer level indices, the
    quantized values, and a mask of inputs that fell outside ``[-Z, Z]``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("quantizer input must be finite")
    Z, L, delta = cfg.Z[s], cfg.L[s], cfg.delta(s)
    clamped = np.abs(y) > Z
    y = np.clip(y, -Z, Z)
    top = 2 ** L - 1
    # Lower level of the bracketing interval; a value sitting on a level takes p = 0.
    c = np.clip(np.floor((y + Z) / delta), 0, top - 1).astype(np.int64)
    p = np.clip((y - (-Z + c * delta)) / delta, 0.0, 1.0)
    code = c + (rng.random(y.shape) < p)
    return code, -Z + code * delta, clamped


def encode(cfg, s, y, rng):
    """Encode one scalar; returns ``(Codeword, q_level)``."""
    if not np.isfinite(y):
        raise ValueError("quantizer input must be finite")
    code, level, _ = quantize(cfg, s, float(y), rng)
    return Codeword.from_int(int(code), cfg.L[s]), float(level)


def flip_codes(cfg, s, code, rng):
    """Pass integer codes through the memoryless BSC of channel ``s``."""
    code = np.asarray(code, dtype=np.int64)
    L, rho = cfg.L[s], cfg.crossover[s]
    flips = rng.random(code.shape + (L,)) < rho
    mask = (flips.astype(np.int64) << np.arange(L, dtype=np.int64)).sum(axis=-1)
    return code ^ mask


def transmit_bsc(cfg, s, code, rng):
    """Flip each bit of a codeword independently with the channel's crossover probability."""
    flips = rng.random(len(code)) < cfg.crossover[s]
    return Codeword(tuple(int(b) ^ int(f) for b, f in zip(code.bits, flips)))


def code_bits(code, L):
    """Bit array (..., L) of integer codes, least-significant first."""
    return (np.asarray(code, dtype=np.int64)[..., None] >> np.arange(L, dtype=np.int64)) & 1


def decode_codes(cfg, s, code):
    return -cfg.Z[s] + np.asarray(code, dtype=np.int64) * cfg.delta(s)


def decode(cfg, s, code):
    """Affine decoder ``-Z + sum_nu b_nu 2**(nu-1) Delta``."""
    total = sum(b * 2.0 ** nu for nu, b in enumerate(code.bits))
    return -cfg.Z[s] + total * cfg.delta(s)


def decoded_moments(cfg, s, q_encoded):
    """Closed-form mean and variance of the decoded value after the BSC.

    The mean is ``(1 - 2 rho) q``; the variance is the input-independent
    constant ``rho (1 - rho) 4 Z^2 (2^{2L} - 1) / (3 (2^L - 1)^2)``.
    """
    Z, L, rho = cfg.Z[s], cfg.L[s], cfg.crossover[s]
    mean = (1.0 - 2.0 * rho) * q_encoded
    var = rho * (1.0 - rho) * 4.0 * Z ** 2 * (4.0 ** L - 1.0) / (3.0 * (2.0 ** L - 1.0) ** 2)
    return mean, var


def enumerate_decoded(cfg, s, code):
    """Exact distribution of the decoded value by summing over all 2**L flip patterns.

    Returns ``(mean, variance, per_bit_variance_sum)`` where the last entry is
    ``sum_nu rho (1 - rho) (2**(nu-1) Delta)**2``, the bit-wise second-moment
    identity applied to independent flips.
    """
    L, rho, delta = cfg.L[s], cfg.crossover[s], cfg.delta(s)
    if L > 16:
        raise ValueError("enumeration is limited to L <= 16")
    weights = 2.0 ** np.arange(L) * delta
    sent = code_bits(code, L)
    patterns = code_bits(np.arange(2 ** L), L)
    k = patterns.sum(axis=1)
    prob = rho ** k * (1.0 - rho) ** (L - k)
    values = -cfg.Z[s] + (sent ^ patterns) @ weights
    m1 = float(prob @ values)
    var = float(prob @ (values - m1) ** 2)
    per_bit = float(np.sum(rho * (1.0 - rho) * weights ** 2))
    return m1, var, per_bit
