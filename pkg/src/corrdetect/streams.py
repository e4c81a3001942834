"""Deterministic random stream derivation.

Every Monte Carlo component draws from a ``numpy.random.Generator`` derived
from a master seed and an integer key path via ``SeedSequence`` spawn keys.
Streams are therefore independent of scheduling: a replication's stream
depends only on (master_seed, key path), never on worker count or execution
order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "stable_token"]


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``key`` under ``master_seed``.

    Identical (master_seed, key) always yield bit-identical streams.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def stable_token(text: str) -> int:
    """Stable 32-bit key for a descriptor string (independent of hash seeds)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
