"""Poisson-binomial helpers used across the analytic modules.

All routines are plain dynamic programs over per-node probabilities, O(n^2) or
O(n^3); no subset enumeration.
"""

from __future__ import annotations

import numpy as np


def pmf(probs) -> np.ndarray:
    """PMF of the number of successes among independent Bernoulli(probs)."""
    out = np.array([1.0])
    for p in np.asarray(probs, dtype=float):
        nxt = np.zeros(len(out) + 1)
        nxt[:-1] = out * (1.0 - p)
        nxt[1:] += out * p
        out = nxt
    return out


def tail_at_least(probs, k: int) -> float:
    """Pr(#successes >= k) for independent Bernoulli(probs)."""
    if k <= 0:
        return 1.0
    probs = np.asarray(probs, dtype=float)
    if k > len(probs):
        return 0.0
    # Saturating DP: states 0..k, where state k absorbs "k or more".
    state = np.zeros(k + 1)
    state[0] = 1.0
    for p in probs:
        shifted = np.zeros_like(state)
        shifted[1:] = state[:-1] * p
        shifted[k] += state[k] * p
        state = state * (1.0 - p) + shifted
    return float(state[k])


def elementary_symmetric(values) -> np.ndarray:
    """Coefficients e_0..e_n of prod(1 + v_i x) for the given values."""
    e = np.array([1.0])
    for v in np.asarray(values, dtype=float):
        nxt = np.zeros(len(e) + 1)
        nxt[:-1] = e
        nxt[1:] += e * v
        e = nxt
    return e


def elementary_symmetric_without(e: np.ndarray, v: float) -> np.ndarray:
    """Deflate: coefficients of prod over the other values, given full ``e``.

    Uses the recurrence e'_k = e_k - v * e'_{k-1}; stable for |v| <= 1.
    """
    out = np.zeros(len(e) - 1)
    prev = 0.0
    for k in range(len(out)):
        prev = e[k] - v * prev
        out[k] = prev
    return out
