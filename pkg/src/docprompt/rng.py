"""Deterministic pseudo-random numbers: xoshiro256** seeded through splitmix64.

Every stochastic step in the package draws from :class:`Rng`, so a single
64-bit seed reproduces any synthetic dataset or training run bit-for-bit.
Scalar draws follow the reference algorithm exactly. Bulk array draws run a
fixed number of independent xoshiro256** lanes in lockstep with numpy so that
noise fields do not cost one Python call per pixel.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LANES = 256


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Rng:
    """xoshiro256** generator.

    >>> r = Rng(42)
    >>> r.next_u64()
    1546998764402558742
    """

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_f64(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_range(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling (no modulo bias)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_f64()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range ``[lo, hi]``."""
        return lo + self.next_range(hi - lo + 1)

    def normal(self) -> float:
        # Box-Muller; 1 - u keeps the log argument away from zero.
        u1 = 1.0 - self.next_f64()
        u2 = self.next_f64()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def split(self) -> "Rng":
        """A child generator seeded from this stream."""
        return Rng(self.next_u64())

    # -- bulk draws -------------------------------------------------------

    def uniform_array(self, shape) -> np.ndarray:
        """Float64 array of uniforms in [0, 1).

        Consumes exactly one scalar draw from this stream (the lane seed),
        regardless of ``shape``.
        """
        n = int(np.prod(shape, dtype=np.int64))
        if n == 0:
            self.next_u64()
            return np.zeros(shape)
        raw = _lane_stream(self.next_u64(), n)
        return ((raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))).reshape(shape)

    def normal_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.uniform_array((2, max(m, 1)))
        r = np.sqrt(-2.0 * np.log(1.0 - u[0]))
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n].reshape(shape)


def _lane_stream(seed: int, n: int) -> np.ndarray:
    """``n`` u64 outputs from ``_LANES`` xoshiro256** lanes, iteration-major."""
    sm = seed
    init = np.empty((4, _LANES), dtype=np.uint64)
    for lane in range(_LANES):
        for k in range(4):
            sm, out = splitmix64(sm)
            init[k, lane] = out
    s0, s1, s2, s3 = (init[k].copy() for k in range(4))
    steps = -(-n // _LANES)
    out = np.empty((steps, _LANES), dtype=np.uint64)
    five, nine = np.uint64(5), np.uint64(9)
    with np.errstate(over="ignore"):
        for i in range(steps):
            x = s1 * five
            out[i] = ((x << np.uint64(7)) | (x >> np.uint64(57))) * nine
            t = s1 << np.uint64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
    return out.reshape(-1)[:n]
