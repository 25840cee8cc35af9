import hashlib
from typing import Dict

import numpy as np


class SeedSplitter:
    """Derive independent, reproducible random streams from one seed.

    Each named stream is a ``numpy.random.Generator`` seeded with
    ``SeedSequence(seed, spawn_key=<digest of name>)``, so the stream a
    module receives depends only on the run seed and the module's name.
    """

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self._streams: Dict[str, np.random.Generator] = {}

    @staticmethod
    def _spawn_key(name: str) -> tuple[int, ...]:
        digest = hashlib.sha256(name.encode("utf-8")).digest()
        return tuple(int.from_bytes(digest[i : i + 4], "big") for i in (0, 4, 8, 12))

    def stream(self, name: str) -> np.random.Generator:
        """Return the generator for ``name`` (created on first use)."""
        if name not in self._streams:
            seq = np.random.SeedSequence(self.seed, spawn_key=self._spawn_key(name))
            self._streams[name] = np.random.default_rng(seq)
        return self._streams[name]

    def fresh(self, name: str) -> np.random.Generator:
        """Return a new generator for ``name``, independent of prior draws."""
        seq = np.random.SeedSequence(self.seed, spawn_key=self._spawn_key(name))
        return np.random.default_rng(seq)


def make_rng(seed: int, name: str) -> np.random.Generator:
    return SeedSplitter(seed).fresh(name)
