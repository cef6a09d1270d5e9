"""Named, seedable counter-based random streams.

Each (seed, stream name) pair maps to an independent Philox generator, so
adding draws to one stream (e.g. evaluation sampling) never perturbs another
(e.g. the training batches).
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def make_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))


class Streams:
    """Lazily created generators for one experiment seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gens: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._gens:
            self._gens[name] = make_rng(self.seed, name)
        return self._gens[name]
