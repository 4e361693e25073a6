"""Keyed random streams.

A stream is addressed by (master seed, path...), where the path names the
experiment, the chunk and any sub-purpose.  Streams are derived directly
from their address, never by advancing a shared generator, so the values a
replica sees do not depend on how many replicas ran before it or on which
worker ran it.
"""
from __future__ import annotations

import zlib

import numpy as np

CHUNK = 256


def _word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def stream(master: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_word(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def tree_keys(master: int, *path, n: int) -> np.ndarray:
    """n independent 64-bit tree keys for the given address."""
    g = stream(master, *path)
    return g.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64,
                      endpoint=True)


def chunks(total: int, size: int = CHUNK) -> list[tuple[int, int, int]]:
    """(chunk index, first replica, count) covering range(total)."""
    return [(c, s, min(size, total - s))
            for c, s in enumerate(range(0, total, size))]
