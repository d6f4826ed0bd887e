"""Named, independent random streams derived from one master seed.

Philox is counter based, so every stream is reproducible and advancing one
stream never shifts another. Each stream counts the values it has handed
out, which the verification suite uses to audit that inference never
touches the noise stream.
"""
from __future__ import annotations

import numpy as np

_STREAM_INDEX = {"shuffle": 0, "dropout": 1, "xi": 2, "init": 3}


class Stream:
    """Counting wrapper around a Philox generator."""

    def __init__(self, master_seed: int, index: int):
        seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
        self._gen = np.random.Generator(np.random.Philox(seq))
        self.draws = 0

    def normal(self, size: int | tuple | None = None) -> np.ndarray:
        self.draws += int(np.prod(size)) if size is not None else 1
        return self._gen.standard_normal(size)

    def uniform(self, size: int | tuple | None = None) -> np.ndarray:
        self.draws += int(np.prod(size)) if size is not None else 1
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        self.draws += n
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        self.draws += int(np.prod(size)) if size is not None else 1
        return self._gen.integers(low, high, size=size)


class RngStreams:
    """The four substreams owned by a training run."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self.shuffle = Stream(self.master_seed, _STREAM_INDEX["shuffle"])
        self.dropout = Stream(self.master_seed, _STREAM_INDEX["dropout"])
        self.xi = Stream(self.master_seed, _STREAM_INDEX["xi"])
        self.init = Stream(self.master_seed, _STREAM_INDEX["init"])
