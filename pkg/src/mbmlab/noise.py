"""Deterministic Gaussian lattice ``eps[j, k]`` from a counter-based generator.

Each deviate is a pure function of ``(seed, j, k, replicate)``, so every
process built from the same lattice sees the same coefficients no matter
which terms it needs or in what order they are requested.

Counter layout (Philox4x32-10, 128-bit counter, 64-bit key):

* word 0, 1: low and high 32 bits of ``zigzag(k)``
* word 2:    ``zigzag(j)`` (|j| < 2**31)
* word 3:    replicate index
* key:       low and high 32 bits of ``seed``

``zigzag(v) = (v << 1) ^ (v >> 63)`` maps 0, -1, 1, -2, ... to 0, 1, 2, 3, ...
Output words 0 and 1 form a 64-bit integer whose top 53 bits give
``u in (0, 1)``, mapped to a standard normal through the inverse CDF.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_BLOCK = 1 << 16


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    ``counter`` is a sequence of four uint32-valued arrays (broadcastable),
    ``key`` a pair of Python ints.  Returns the four output words as uint64
    arrays holding 32-bit values.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        rk0 = np.uint64((k0 + r * _W0) & 0xFFFFFFFF)
        rk1 = np.uint64((k1 + r * _W1) & 0xFFFFFFFF)
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _SHIFT32) ^ c1 ^ rk0, p1 & _MASK32,
                          (p0 >> _SHIFT32) ^ c3 ^ rk1, p0 & _MASK32)
    return c0, c1, c2, c3


def zigzag(v):
    v = np.asarray(v, dtype=np.int64)
    return ((v << np.int64(1)) ^ (v >> np.int64(63))).astype(np.uint64)


@dataclass(frozen=True)
class NoiseLattice:
    """Standard normal lattice keyed by a 64-bit seed.

    ``scale`` multiplies every deviate; it exists to check that synthesized
    paths are linear in the coefficients.
    """

    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def uniforms(self, j, k, replicate=0):
        j, k, replicate = np.broadcast_arrays(np.asarray(j, dtype=np.int64),
                                              np.asarray(k, dtype=np.int64),
                                              np.asarray(replicate, dtype=np.int64))
        if j.size and np.abs(j).max() >= 2**31:
            raise ValueError("|j| must be below 2**31")
        if replicate.size and (replicate.min() < 0 or replicate.max() >= 2**32):
            raise ValueError("replicate index must fit in 32 unsigned bits")
        zk = zigzag(k)
        seed = int(self.seed)
        x0, x1, _, _ = philox4x32((zk & _MASK32, zk >> _SHIFT32, zigzag(j), replicate.astype(np.uint64)),
                                  (seed & 0xFFFFFFFF, seed >> 32))
        bits = ((x0 << _SHIFT32) | x1) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def epsilon(self, j, k, replicate=0):
        out = ndtri(self.uniforms(j, k, replicate))
        if self.scale != 1.0:
            out = out * self.scale
        return out

    def matrix(self, j, k, replicates) -> np.ndarray:
        """Deviates for terms ``(j[i], k[i])`` with one row per replicate index."""
        rep = np.asarray(replicates, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        out = np.empty((rep.size, j.size))
        step = max(1, _BLOCK // max(1, rep.size))
        for start in range(0, j.size, step):
            sl = slice(start, start + step)
            out[:, sl] = self.epsilon(j[None, sl], k[None, sl], rep[:, None])
        return out


def epsilon(lattice: NoiseLattice, j, k, replicate=0):
    """Standard normal deviate attached to wavelet index ``(j, k)``."""
    return lattice.epsilon(j, k, replicate)


def envelope_exceedances(lattice: NoiseLattice, half_width: int, c: float = 6.0,
                         replicate: int = 0, block: int = 256) -> tuple[int, float]:
    """Count ``|eps[j, k]| > c sqrt(log(3 + |j| + |k|))`` over ``|j|, |k| <= half_width``.

    Also returns the largest ratio ``|eps| / sqrt(log(3 + |j| + |k|))`` seen.
    """
    ks = np.arange(-half_width, half_width + 1)
    count = 0
    worst = 0.0
    for j0 in range(-half_width, half_width + 1, block):
        js = np.arange(j0, min(j0 + block, half_width + 1))
        eps = lattice.epsilon(js[:, None], ks[None, :], replicate)
        ratio = np.abs(eps) / np.sqrt(np.log(3.0 + np.abs(js)[:, None] + np.abs(ks)[None, :]))
        count += int(np.count_nonzero(ratio > c))
        worst = max(worst, float(ratio.max()))
    return count, worst
