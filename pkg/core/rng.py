# core/rng.py
"""
Seed derivation. Every random draw in the pipeline comes from a Generator keyed by
(seed, stream, *indices) so results never depend on evaluation order or thread timing.
"""

import numpy as np

# Stream tags keep unrelated consumers of the same seed independent
STREAM_SPLIT = 1
STREAM_PAIRING = 2
STREAM_CNN = 3
STREAM_SOLVER = 4
STREAM_SWARM_INIT = 5
STREAM_SWARM_MOVE = 6
STREAM_LAYOUT = 7
STREAM_WRITER = 8


def derive_rng(seed: int, stream: int, *indices: int) -> np.random.Generator:
    """Independent generator for one (seed, stream, indices) coordinate."""
    entropy = [int(seed), int(stream), *(int(i) for i in indices)]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seeds and stream indices must be non-negative, got {entropy}")
    return np.random.default_rng(np.random.SeedSequence(entropy))
