"""Deterministic named random substreams.

A single master seed fans out to independent generators keyed by a label
and optional integer indices (epoch, batch, replicate, ...).  Substreams
are reproducible regardless of the order in which they are created, so
components can be re-run or parallelized without perturbing each other.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return a generator for the substream (name, *indices) under master_seed.

    The label is hashed with CRC-32 so distinct names give distinct streams;
    indices extend the key for per-step streams, e.g. ("prior", epoch, batch).
    """
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    # SeedSequence absorbs trailing zero entropy words, so ("x",) and
    # ("x", 0) would collide without the index count in the key.
    key = [master_seed, len(indices), zlib.crc32(name.encode("utf-8"))]
    for ix in indices:
        if ix < 0:
            raise ValueError("substream indices must be non-negative")
        key.append(int(ix))
    return np.random.default_rng(np.random.SeedSequence(key))


def shift_words(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Draw dim uniform 32-bit words, e.g. for digital shifts."""
    return rng.integers(0, 1 << 32, size=dim, dtype=np.uint32)
