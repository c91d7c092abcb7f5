"""Reproducible random streams built on numpy's counter-based Philox bit
generator.

Streams are addressed by (seed, *path), where path is a tuple of small
integers (replicate index, branch tag, ...). The same address always yields
the same stream no matter how many other streams exist or how work is split
across workers, which is what makes parallel simulation and resampling
reproducible.
"""

from __future__ import annotations

import os

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent Generator for the stream at (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, *path) into a single 64-bit seed for an inner API."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def worker_count() -> int:
    """Worker cap from NUDGE_IV_THREADS; defaults to available parallelism.

    Results never depend on this value, only wall-clock time does.
    """
    raw = os.environ.get("NUDGE_IV_THREADS")
    if raw is not None:
        count = int(raw)
        if count < 1:
            raise ValueError("NUDGE_IV_THREADS must be a positive integer")
        return count
    return os.cpu_count() or 1
