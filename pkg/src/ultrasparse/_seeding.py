"""Deterministic per-purpose random streams derived from a single root seed."""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Independent generator keyed by (seed, label, indices).

    Uses SeedSequence spawn keys so distinct labels/indices never collide,
    which lets every module draw its own reproducible stream from one seed.
    """
    key = zlib.crc32(label.encode("ascii"))
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(key, *(int(i) & 0xFFFFFFFF for i in indices)),
    )
    return np.random.default_rng(ss)


def rademacher(rng: np.random.Generator, n: int) -> np.ndarray:
    """Vector of +-1 entries."""
    return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
