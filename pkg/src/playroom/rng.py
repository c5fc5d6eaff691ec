"""Portable deterministic random stream.

The generator is splitmix64: state advances by the 64-bit golden gamma and
each output is the finalizer mix of the new state.  It is tiny, has a full
2^64 period, and produces identical sequences on every platform, which is
what episode replay relies on.  Independent named sub-streams are derived
by folding an FNV-1a hash of the label into the root seed.
"""

from __future__ import annotations

import math

from playroom.hashing import MASK64, fnv1a_64

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """splitmix64 stream; one instance per independent decision source."""

    __slots__ = ("_seed", "_state")

    def __init__(self, seed: int):
        self._seed = seed & MASK64
        self._state = seed & MASK64

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform int in [0, n); always consumes exactly one draw."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.next_u64() % n

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates; n-1 draws for a list of n items."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, label: str) -> "Rng":
        """Independent child stream; stable no matter how much was drawn."""
        return Rng(self._seed ^ fnv1a_64(label.encode("utf-8")))

    def angle(self) -> float:
        """Uniform angle in [0, 2*pi)."""
        return self.random() * 2.0 * math.pi
