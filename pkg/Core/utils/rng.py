"""Deterministic randomness with named per-party sub-streams."""

import zlib
from typing import Dict, List, Tuple

import numpy as np

class Rng:
    """Counter-based random source.

    Each named stream ("user", "shuffler", "collector", "attack", ...) is an
    independent Philox generator derived from the seed, the stream name and
    the trial path. Replacing one party's choices therefore leaves the other
    streams untouched.
    """

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer: {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """Generator for a named stream; repeated calls continue the same stream."""
        if name not in self._streams:
            code = zlib.crc32(name.encode('utf-8'))
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(code,) + self.path)
            self._streams[name] = np.random.Generator(np.random.Philox(sequence))
        return self._streams[name]

    def child(self, index: int) -> "Rng":
        """Independent source for trial `index`."""
        return Rng(self.seed, self.path + (index,))

    def spawn(self, count: int) -> List["Rng"]:
        """Children 0..count-1."""
        return [self.child(i) for i in range(count)]

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"
