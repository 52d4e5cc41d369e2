"""Deterministic random substreams.

Every random consumer gets its own ``numpy.random.Generator`` built from
``SeedSequence(master_seed, spawn_key=key)``.  The key is a tuple of
non-negative integers naming the consumer (replicate index, role, counter),
so results do not depend on execution order or on how many workers run.
"""

from __future__ import annotations

import numpy as np

# role tags used inside spawn keys
SIMULATION = 0
DMF = 1
GA = 2
LOSS = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
