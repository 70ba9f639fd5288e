"""Replayable per-replicate random streams.

Each stream is a Philox counter-based generator keyed by mixing
``(master_seed, stream_id)`` through ``numpy.random.SeedSequence``.  Normals
are produced by the inverse normal CDF applied to 53-bit uniforms, which
keeps the variates a fixed function of the raw counter output.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import ndtri

RESERVED_STREAM_BASE = 1 << 63

_TWO_M53 = 2.0**-53


class RngStream:
    """One independent random stream.

    Two streams with the same ``(master_seed, stream_id)`` produce identical
    output; the object itself is stateful (the counter advances).
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        if master_seed < 0 or stream_id < 0:
            raise ValueError("seeds must be non-negative")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        self._bitgen = np.random.Philox(ss)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def uniform(self, size) -> np.ndarray:
        """Uniforms on the open interval (0, 1)."""
        n = int(np.prod(size))
        raw = self._bitgen.random_raw(n)
        return (((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53).reshape(size)

    def normal(self, size) -> np.ndarray:
        return ndtri(self.uniform(size))

    def generator(self) -> np.random.Generator:
        """A numpy Generator on the same bit stream (for permutations, choices)."""
        return np.random.Generator(self._bitgen)


def streams(master_seed: int, stream_ids) -> list[RngStream]:
    return [RngStream(master_seed, int(s)) for s in stream_ids]


def stacked_normals(rngs: RngStream | Sequence[RngStream], n: int) -> tuple[np.ndarray, bool]:
    """Normals of length ``n`` from each stream; returns (array, batched).

    A single stream gives a 1-d array; a sequence gives one row per stream.
    """
    if isinstance(rngs, RngStream):
        return rngs.normal(n), False
    rngs = list(rngs)
    out = np.empty((len(rngs), n))
    for k, r in enumerate(rngs):
        out[k] = r.normal(n)
    return out, True
