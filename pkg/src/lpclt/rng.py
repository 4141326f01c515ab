"""Counter-based random streams keyed by (seed, tag, ..., replicate).

Each key tuple gets its own Philox stream, so replicate ``r`` of an
experiment draws the same numbers no matter how replicates are batched or
distributed over workers.
"""
import zlib

import numpy as np


def _word(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be nonnegative")
    return k


def rng_stream(seed, *key):
    """Generator for the stream identified by ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_word(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
