"""Self-contained pseudorandom generator used for every seeded draw.

All reproducible numbers in this package (synthetic corpora, network
initialization, batch shuffling) come from xorshift64* rather than a
platform RNG, so fixtures frozen on one machine hold everywhere.

Algorithm (Vigna's xorshift64*), on 64-bit unsigned state::

    s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27
    output = (s * 2685821657736338717) mod 2**64

Uniform doubles take the top 53 bits of the output; gaussians use the
Box-Muller transform on two consecutive uniforms.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_MULT = 2685821657736338717
_DOUBLE_SCALE = 1.0 / (1 << 53)


class Xorshift64Star:
    """Deterministic 64-bit shift-register generator."""

    def __init__(self, seed: int):
        # state must be nonzero; splat the seed through one multiply so
        # small seeds do not start in a low-entropy region
        s = (seed & _MASK64) or 0x9E3779B97F4A7C15
        self._state = (s * _MULT) & _MASK64 or 1

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._state = s
        return (s * _MULT) & _MASK64

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + int(self.uniform() * (hi - lo + 1))

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def gauss(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Box-Muller; consumes exactly two uniforms per call."""
        u1 = self.uniform()
        u2 = self.uniform()
        # u1 = 0 would take log(0); the top-53-bit uniform can emit 0
        if u1 <= 0.0:
            u1 = _DOUBLE_SCALE
        r = math.sqrt(-2.0 * math.log(u1))
        return mean + std * r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
