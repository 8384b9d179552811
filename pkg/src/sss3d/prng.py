"""Pinned hash and PRNG primitives for cross-process reproducibility.

External evaluator processes must reproduce the built-in surrogate
bit-for-bit, so the generator is fixed down to integer arithmetic:
FNV-1a 64 for seeding, splitmix64 for the stream, and a 53-bit mantissa
conversion to floats. Do not substitute library RNGs here.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


class SplitMix64:
    """Counter-based 64-bit generator (Vigna's splitmix64)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _SPLITMIX_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform float in [0, 1) with 53 random mantissa bits."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def skip(self, n: int) -> None:
        # The state advances by a fixed increment, so skipping is O(1).
        self.state = (self.state + n * _SPLITMIX_GAMMA) & _MASK64
