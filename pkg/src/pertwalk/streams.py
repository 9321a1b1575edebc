"""Splittable random streams for reproducible Monte Carlo.

A :class:`RandomStream` is identified by a root seed and a key path. Child
streams are derived with :meth:`RandomStream.substream`, so block ``i`` of a
simulation always sees the same numbers no matter how many workers run or in
which order blocks finish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RandomStream:
    seed: int
    key: tuple[int, ...] = ()
    _rng: np.random.Generator | None = field(default=None, compare=False, repr=False)

    def substream(self, index: int) -> "RandomStream":
        if index < 0:
            raise ValueError("substream index must be nonnegative")
        return RandomStream(self.seed, self.key + (int(index),))

    @property
    def rng(self) -> np.random.Generator:
        # lazily built, then cached on the frozen instance
        if self._rng is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
            object.__setattr__(self, "_rng", np.random.Generator(np.random.PCG64DXSM(ss)))
        return self._rng

    def reset(self) -> "RandomStream":
        """Fresh stream with the same identity (state rewound to the start)."""
        return RandomStream(self.seed, self.key)


def as_stream(stream) -> RandomStream:
    if isinstance(stream, RandomStream):
        return stream
    if stream is None:
        return RandomStream(0)
    return RandomStream(int(stream))
