"""Portable, seedable random streams.

Every random draw in the package comes from SplitMix64, a counter-based
64-bit generator whose recurrence is short enough to port anywhere:

    state <- state + 0x9E3779B97F4A7C15              (mod 2**64)
    z     <- state
    z     <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2**64)
    z     <- (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2**64)
    out   <- z ^ (z >> 31)

Derived quantities:

* uniform double in [0, 1):   (out >> 11) * 2**-53
* integer in [0, k):          floor(uniform * k)
* standard normal:            Marsaglia polar method on pairs of uniforms
                              u, v = 2*uniform - 1, accepted when
                              0 < s = u*u + v*v < 1; returns u*sqrt(-2 ln s / s)
                              then caches v*sqrt(-2 ln s / s) for the next call.
* sub-stream:                 derive(seed, key) = mix(seed + (key + 1) * GOLDEN)
                              where mix is the three output lines above.

Because output i of a stream is ``mix(seed + i * GOLDEN)``, blocks of draws
can be generated vectorised (``random_array``) with results identical to
sequential calls.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive(seed: int, *keys: int) -> int:
    """Seed of the sub-stream addressed by ``keys`` under ``seed``."""
    s = seed & MASK64
    for key in keys:
        s = mix64(s + ((key + 1) & MASK64) * GOLDEN)
    return s


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential SplitMix64 stream with uniform, integer and normal draws."""

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self._spare: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * INV_2_53

    def integer(self, k: int) -> int:
        """Uniform integer in ``[0, k)``."""
        if k <= 0:
            raise ValueError("k must be positive")
        return int(self.random() * k)

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        while True:
            u = 2.0 * self.random() - 1.0
            v = 2.0 * self.random() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * f
        return u * f

    def random_array(self, size: int) -> np.ndarray:
        """``size`` uniforms, identical to ``size`` calls of :meth:`random`."""
        if self._spare is not None:
            raise RuntimeError("cannot draw a block while a normal deviate is cached")
        counters = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + counters * np.uint64(GOLDEN)
            out = _mix64_array(states)
        self.state = (self.state + size * GOLDEN) & MASK64
        return (out >> np.uint64(11)).astype(np.float64) * INV_2_53

    def normal_array(self, size: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(size)], dtype=np.float64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``0..n-1``: for i = n-1 .. 1 swap i with integer(i+1)."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
