"""Random-number streams.

All randomness comes from numpy's Philox generator, a counter-based 64-bit
algorithm. A master seed plus a replica index derive statistically
independent streams via ``SeedSequence(seed, spawn_key=(replica,))``, so
replicas can run in any order (or in parallel) and still reproduce
bit-for-bit.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, replica: int = 0) -> np.random.Generator:
    """Return the generator for one replica of an experiment."""
    ss = np.random.SeedSequence(seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))
