"""Deterministic random-number streams.

Every Monte-Carlo routine derives its generators from a user seed plus a
structured key (domain, block index, grid index, ...).  Streams are
independent Philox counters, so results do not depend on chunking or on
the order in which blocks are processed.
"""

import numpy as np

# stream domains
SIM_STATES = 0
SIM_INPUTS = 1
SIM_NOISE = 2
PATTERN = 3
PILOT_MASK = 4
PRIOR = 5
SEARCH = 6


def stream(seed, *key):
    """Philox generator for the stream identified by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
