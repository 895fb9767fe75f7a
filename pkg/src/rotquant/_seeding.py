"""Seed expansion shared by every randomized component.

A single 64-bit master seed is expanded into independent, named streams so
that the rotation, the residual sketch and synthetic data can each be
regenerated on their own.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("ascii"))


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Generator for the named stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, _stream_key(stream)])
    return np.random.Generator(np.random.PCG64(ss))


def trial_seed(master_seed: int, trial: int) -> int:
    """Per-trial seed; depends only on (master_seed, trial), never on order."""
    ss = np.random.SeedSequence([int(master_seed) & _MASK64, _stream_key("trial"), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
