"""Deterministic random-stream derivation.

Every stochastic component of a run draws from a PCG64 generator derived
from the experiment seed plus a path of labels, e.g.
``substream(seed, "local", round_idx, client_id)``.  Distinct paths give
statistically independent streams, so clients trained in parallel produce
the same numbers as clients trained sequentially.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_word(part) -> int:
    """Map a path component (int or str) to a stable 32-bit word."""
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream path ints must be nonnegative, got {part}")
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise TypeError(f"stream path parts must be int or str, got {type(part).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for (seed, *path); same arguments always give the same stream."""
    key = tuple(_key_word(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
