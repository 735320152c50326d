"""Deterministic replicate streams.

Each replicate draws from a Philox counter-based generator keyed by
(base_seed, replicate_index), so serial and parallel runs see identical
streams regardless of scheduling order.
"""
import numpy as np


def replicate_rng(base_seed: int, replicate_index: int = 0) -> np.random.Generator:
    key = np.array([base_seed, replicate_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
