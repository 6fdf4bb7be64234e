"""Counter-based random streams keyed by (seed, stream id, ...)."""

import numpy as np

# stream ids
COMMUNITY = 0
EDGES = 1
PARTITION = 2
TREE = 3
TRIAL = 4
SAMPLE = 5


def stream(seed, *key):
    """Independent Philox generator for ``seed`` and the integer path ``key``."""
    if seed is None:
        seed = 0
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *key):
    """A 63-bit integer seed derived from ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
