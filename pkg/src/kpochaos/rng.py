"""SplitMix64 stream with Box-Muller normal variates.

Chosen over numpy's bit generators because the exact sequence is trivial to
reproduce in any language: the generator name and seed go into every output
manifest. Iteration ``k`` of an experiment draws from ``substream(seed, k)``,
so results do not depend on how iterations are scheduled across threads.
"""
from __future__ import annotations

import math

NAME = "splitmix64+box-muller"

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK
        self._spare = None

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix(self.state)

    def uniform(self) -> float:
        """Uniform double in (0, 1]; never 0 so ``log`` is safe."""
        return ((self.next_u64() >> 11) + 1) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]


def substream(seed: int, index: int) -> SplitMix64:
    """Independent generator for iteration ``index`` of a run seeded with ``seed``."""
    return SplitMix64(_mix((int(seed) & _MASK) ^ _mix((int(index) + 1) * _GAMMA & _MASK)))
