"""Named, reproducible random substreams derived from one integer seed."""

from __future__ import annotations

import zlib
from typing import Dict

import numpy as np

STREAMS = ("world", "policy", "noise", "vision")


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for ``name`` (and optional trial indices) under ``seed``.

    Independent of creation order, so serial and parallel runs that ask for
    the same (seed, name, index) get the same numbers.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8")), *[int(i) for i in index]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


class RngStreams:
    """The four per-episode streams: initial conditions, exploration, sensor noise, camera noise."""

    def __init__(self, seed: int, *index: int):
        self._gens: Dict[str, np.random.Generator] = {n: substream(seed, n, *index) for n in STREAMS}

    @property
    def world(self) -> np.random.Generator:
        return self._gens["world"]

    @property
    def policy(self) -> np.random.Generator:
        return self._gens["policy"]

    @property
    def noise(self) -> np.random.Generator:
        return self._gens["noise"]

    @property
    def vision(self) -> np.random.Generator:
        return self._gens["vision"]
