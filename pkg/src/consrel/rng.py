"""Named, counter-based random substreams.

All stochastic code in this package draws from Philox streams keyed by a user
seed plus an integer path naming the substream (e.g. ``(STREAM_TRIALS, chunk)``
or ``(STREAM_ATTEMPTS, round)``).  Streams with different paths are
statistically independent, and a draw never depends on how work was batched or
scheduled, so runs are reproducible bit-for-bit from the seed alone.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream domains.  Keep these stable: changing them changes every seeded result.
STREAM_TRIALS = 1
STREAM_ARRIVALS = 2
STREAM_ATTEMPTS = 3
STREAM_OPTIMIZER = 4


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return a generator for the substream named by ``path`` under ``seed``."""
    h = _splitmix64(seed & _MASK64)
    for part in path:
        h = _splitmix64(h ^ (part & _MASK64))
    key = np.array([seed & _MASK64, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
