"""Independent oracles used by the test suite.

The brute-force reliability oracle walks the phases in order, carrying the
joint distribution over every activated set that later phases still depend
on.  Per-node activation probabilities come from exhaustive enumeration of
delivery outcomes (for many-to-many phases, all 2^k sender subsets), so no
closed-form tail or set-sum shortcut from the implementation is reused.
"""

from itertools import product

import numpy as np


def _resolve_m(threshold, n, f):
    if threshold.kind == "n-f":
        return n - f
    if threshold.kind == "f+1":
        return f + 1
    return threshold.value


def _oracle_activation(kind, i, prior, params):
    """Activation probability of node i by raw enumeration of deliveries."""
    if kind.value == "A":
        return float(params.link_down[i])
    if kind.value == "B":
        return float(params.link_up[i])
    senders = sorted(prior - {i})
    need = params.n - params.f - 1
    total = 0.0
    for bits in product((0, 1), repeat=len(senders)):
        if sum(bits) < need:
            continue
        p = 1.0
        for u, b in zip(senders, bits):
            q = float(params.link_mesh[u, i])
            p *= q if b else 1.0 - q
        total += p
    return total


def brute_force_reliability(structure, params) -> float:
    """Pr(every phase meets its threshold), by forward outcome enumeration."""
    n, f = params.n, params.f
    comps = structure.components
    n_phases = len(comps)
    m = [n - f] + [_resolve_m(c.m, n, f) for c in comps]
    parent = [0] + [j - c.r for j, c in enumerate(comps, start=1)]
    last_use = {}
    for j in range(1, n_phases + 1):
        last_use[parent[j]] = j
    nodes = list(range(n))

    # state: (frozenset of (phase, activated set) still needed, all-ok flag) -> prob
    states = {}
    for bits in product((0, 1), repeat=n):
        s0 = frozenset(i for i in nodes if bits[i])
        pr = 1.0
        for i in nodes:
            q = float(params.node_reliability[i])
            pr *= q if bits[i] else 1.0 - q
        if pr == 0.0:
            continue
        live = frozenset({(0, s0)}) if last_use.get(0) else frozenset()
        key = (live, len(s0) >= n - f)
        states[key] = states.get(key, 0.0) + pr

    for j in range(1, n_phases + 1):
        kind = comps[j - 1].kind
        new_states = {}
        for (live, ok), pr in states.items():
            live_map = dict(live)
            prior = live_map[parent[j]]
            members = sorted(prior)
            act = [_oracle_activation(kind, i, prior, params) for i in members]
            for bits in product((0, 1), repeat=len(members)):
                p_t = pr
                for a, b in zip(act, bits):
                    p_t *= a if b else 1.0 - a
                if p_t == 0.0:
                    continue
                subset = frozenset(i for i, b in zip(members, bits) if b)
                nxt = dict(live_map)
                if last_use.get(parent[j]) == j:
                    del nxt[parent[j]]
                if last_use.get(j):
                    nxt[j] = subset
                key = (frozenset(nxt.items()), ok and len(subset) >= m[j])
                new_states[key] = new_states.get(key, 0.0) + p_t
        states = new_states

    return sum(pr for (_, ok), pr in states.items() if ok)


def random_cluster(rng: np.random.Generator, n: int, f: int, lo: float = 0.5, hi: float = 1.0):
    """Heterogeneous ClusterParams with entries drawn uniformly from [lo, hi]."""
    from consrel.exact import ClusterParams

    return ClusterParams(
        n,
        f,
        rng.uniform(lo, hi, n),
        rng.uniform(lo, hi, n),
        rng.uniform(lo, hi, n),
        rng.uniform(lo, hi, (n, n)),
    )
