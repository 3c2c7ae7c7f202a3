"""Named, independently seeded random streams.

Each stochastic decision point draws from its own stream, keyed by a stable
name, so adding a source or a queue never shifts the draws seen by another.
"""

from __future__ import annotations

import zlib
from typing import Dict

import numpy as np


class RandomStream:
    __slots__ = ("name", "_gen", "_buf", "_pos", "_block")

    def __init__(self, seed: int, name: str, block: int = 4096) -> None:
        self.name = name
        key = zlib.crc32(name.encode("utf-8"))
        self._gen = np.random.default_rng(np.random.SeedSequence([int(seed), key]))
        self._block = block
        self._buf = self._gen.random(block)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= self._block:
            self._buf = self._gen.random(self._block)
            self._pos = 0
        value = float(self._buf[self._pos])
        self._pos += 1
        return value

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()


class RandomStreams:
    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._streams: Dict[str, RandomStream] = {}

    def get(self, name: str) -> RandomStream:
        stream = self._streams.get(name)
        if stream is None:
            stream = RandomStream(self.seed, name)
            self._streams[name] = stream
        return stream
