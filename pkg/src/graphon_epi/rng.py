"""Named, hierarchically derived random streams.

Every random draw in the package flows through a stream addressed by a
(master_seed, *path) tuple, where path components are short names and
integer indices (e.g. ``stream(seed, "graph", row)``).  Streams with
different paths are independent, and a stream's realization depends only
on its own path, so per-row / per-individual / per-replica work can be
farmed out to workers in any order and still reproduce bit-identically.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_entropy(master_seed: int, path) -> tuple:
    parts = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for p in path:
        if isinstance(p, str):
            parts.append(zlib.crc32(p.encode("utf8")))
        else:
            q = int(p)
            if q < 0:
                raise ValueError(f"stream path indices must be >= 0, got {q}")
            parts.append(q)
    return tuple(parts)


def seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(_path_entropy(master_seed, path))


def stream(master_seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under ``master_seed``."""
    return np.random.default_rng(seed_sequence(master_seed, *path))


def replica_seed(master_seed: int, n: int, replica: int) -> int:
    """Derived 64-bit seed for one (N, replica) sweep cell."""
    ss = seed_sequence(master_seed, "cell", n, replica)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
