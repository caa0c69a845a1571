"""Keyed random streams.

All randomness in the package flows through generators keyed by small
integer tuples (seed, layer, block, ...). Each key yields an independent
stream, so draws depend only on the key and never on the order in which
work is scheduled.
"""

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF


def stream_rng(*key: int) -> np.random.Generator:
    """Return a generator fully determined by the integer tuple ``key``."""
    words = tuple(int(k) & _U64 for k in key)
    return np.random.default_rng(np.random.SeedSequence(words))
