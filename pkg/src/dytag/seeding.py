"""Seed discipline shared by every sampling site.

All randomness flows through numpy's PCG64, which has a fixed, portable
stream definition. A root seed plus a purpose string gives each sampling
site its own independent, reproducible generator.
"""

from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Generator derived from (seed, purpose); stable across platforms."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, zlib.crc32(purpose.encode("utf-8"))])))
