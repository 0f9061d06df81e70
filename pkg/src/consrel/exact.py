"""Exact consensus reliability under probabilistic node and link failures.

The success probability of one consensus instance is the probability that
every phase ends with at least its threshold of activated nodes.  With
per-node and per-link reliabilities this is a nested sum over chains of
activated-node sets along the phase-dependence tree; it is evaluated here by
memoized recursion over (phase, prior activated set).

The primary is modelled as an external non-failing coordinator (a primary
fault triggers a view change, which is outside the normal-case analysis), so
``n`` counts backups only.

For clusters whose nodes and links share common reliabilities the set sums
collapse to sums over set sizes; :func:`exact_reliability_iid` evaluates that
form in exact rational arithmetic so that failure rates far below the
floating-point resolution of ``1 - p`` remain meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import pbinom
from .errors import ComputationError, ParamError
from .protocols import (
    GraphKind,
    ProtocolStructure,
    ResolvedStructure,
    dependence_tree,
    validate_structure,
)

# Enumeration caps for the heterogeneous exact sum.  Cost grows roughly as
# (|G|+2)^n; beyond these sizes use the iid form or Monte Carlo.
MAX_EXACT_N = 10
MAX_EXACT_N_WITH_C = 8


def _as_prob_array(values, n: int, what: str) -> np.ndarray:
    arr = np.array(np.broadcast_to(np.asarray(values, dtype=float), (n,)))
    if np.any((arr < 0.0) | (arr > 1.0)) or not np.all(np.isfinite(arr)):
        raise ParamError("PROB_OUT_OF_RANGE", f"{what} must lie in [0, 1]")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ClusterParams:
    """Per-node and per-link reliabilities for a cluster of n backups.

    node_reliability[i] is the probability node i is non-faulty; link_down[i]
    and link_up[i] are the delivery probabilities primary->i and i->primary;
    link_mesh[u, i] is the delivery probability u->i (diagonal unused).
    """

    n: int
    f: int
    node_reliability: np.ndarray
    link_down: np.ndarray
    link_up: np.ndarray
    link_mesh: np.ndarray

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.f < self.n:
            raise ParamError("PARAMS_INVALID", f"need n >= 1 and 0 <= f < n, got n={self.n}, f={self.f}")
        object.__setattr__(self, "node_reliability", _as_prob_array(self.node_reliability, self.n, "node_reliability"))
        object.__setattr__(self, "link_down", _as_prob_array(self.link_down, self.n, "link_down"))
        object.__setattr__(self, "link_up", _as_prob_array(self.link_up, self.n, "link_up"))
        mesh = np.array(np.broadcast_to(np.asarray(self.link_mesh, dtype=float), (self.n, self.n)))
        if np.any((mesh < 0.0) | (mesh > 1.0)) or not np.all(np.isfinite(mesh)):
            raise ParamError("PROB_OUT_OF_RANGE", "link_mesh must lie in [0, 1]")
        mesh.setflags(write=False)
        object.__setattr__(self, "link_mesh", mesh)

    @classmethod
    def iid(cls, n: int, f: int, p_node: float, p_link: float) -> "ClusterParams":
        """All nodes share p_node, all links (both directions and mesh) share p_link."""
        return cls(n, f, p_node, p_link, p_link, p_link)

    def with_perfect_links(self) -> "ClusterParams":
        return ClusterParams(self.n, self.f, self.node_reliability, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ReliabilityResult:
    """A consensus success/failure probability pair with method provenance."""

    p_c: float
    p_f: float
    method: str
    detail: Optional[dict] = field(default=None, compare=False)

    _METHODS = ("exact", "exact_iid", "joint", "power_series", "tree_approx", "iid_first_order", "monte_carlo")

    def __post_init__(self):
        if self.method not in self._METHODS:
            raise ParamError("PARAMS_INVALID", f"unknown method tag {self.method!r}")
        if not 0.0 <= self.p_c <= 1.0 or abs(self.p_c + self.p_f - 1.0) > 1e-12:
            raise ParamError("PROB_OUT_OF_RANGE", f"inconsistent pair p_c={self.p_c}, p_f={self.p_f}")

    @classmethod
    def from_success(cls, p_c: float, method: str, detail: Optional[dict] = None) -> "ReliabilityResult":
        p_c = min(max(float(p_c), 0.0), 1.0)
        return cls(p_c, 1.0 - p_c, method, detail)

    @classmethod
    def from_failure(cls, p_f, method: str, detail: Optional[dict] = None) -> "ReliabilityResult":
        """Build from the failure side; p_f may be an exact Fraction.

        Keeps full precision on p_f (the interesting quantity when it is
        tiny); p_c is its rounded complement.
        """
        p_c = float(1 - Fraction(p_f)) if isinstance(p_f, Fraction) else 1.0 - float(p_f)
        p_f = min(max(float(p_f), 0.0), 1.0)
        return cls(min(max(p_c, 0.0), 1.0), p_f, method, detail)


def activation_probability(kind: GraphKind, i: int, params: ClusterParams, prior_set) -> float:
    """Probability that node i becomes activated in a phase with graph ``kind``.

    ``prior_set`` is the activated set of the phase this one depends on.  For
    the many-to-many graph, i must belong to it and must receive at least
    n - f - 1 of the independent deliveries from the other members.
    """
    if kind is GraphKind.ONE_TO_MANY:
        return float(params.link_down[i])
    if kind is GraphKind.MANY_TO_ONE:
        return float(params.link_up[i])
    prior = frozenset(prior_set)
    if i not in prior:
        raise ParamError("NODE_NOT_IN_PRIOR_SET", f"node {i} not in prior activated set")
    senders = sorted(prior - {i})
    probs = params.link_mesh[senders, i] if senders else []
    return pbinom.tail_at_least(probs, params.n - params.f - 1)


def _bits(mask: int, n: int) -> list[int]:
    return [i for i in range(n) if mask >> i & 1]


def _submasks_ascending(mask: int) -> list[int]:
    subs = []
    s = mask
    while True:
        subs.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    subs.reverse()
    return subs


class _ExactEvaluator:
    """Memoized evaluation of the subtree success probability given a prior set."""

    def __init__(self, resolved: ResolvedStructure, params: ClusterParams):
        self.resolved = resolved
        self.params = params
        self.children = dependence_tree(resolved.structure).children
        self.n = params.n
        self._memo: dict[tuple[int, int], float] = {}
        self._act_memo: dict[tuple[int, int], np.ndarray] = {}

    def _activation(self, j: int, prior_mask: int) -> np.ndarray:
        key = (j, prior_mask)
        cached = self._act_memo.get(key)
        if cached is not None:
            return cached
        kind = self.resolved.kinds[j]
        members = _bits(prior_mask, self.n)
        if kind is GraphKind.ONE_TO_MANY:
            act = self.params.link_down
        elif kind is GraphKind.MANY_TO_ONE:
            act = self.params.link_up
        else:
            act = np.zeros(self.n)
            need = self.params.n - self.params.f - 1
            for i in members:
                senders = [u for u in members if u != i]
                act[i] = pbinom.tail_at_least(self.params.link_mesh[senders, i], need)
        self._act_memo[key] = act
        return act

    def subtree_success(self, j: int, prior_mask: int) -> float:
        """Pr(phase j and all phases below it meet their thresholds | prior set)."""
        key = (j, prior_mask)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        act = self._activation(j, prior_mask)
        members = _bits(prior_mask, self.n)
        m_j = self.resolved.m[j]
        total = 0.0
        # Fixed ascending enumeration order keeps float results reproducible.
        for sub in _submasks_ascending(prior_mask):
            if bin(sub).count("1") < m_j:
                continue
            p = 1.0
            for u in members:
                p *= act[u] if sub >> u & 1 else 1.0 - act[u]
            for c in self.children[j]:
                p *= self.subtree_success(c, sub)
            total += p
        self._memo[key] = total
        return total

    def success_given_phase0(self, s0_mask: int) -> float:
        p = 1.0
        for c in self.children[0]:
            p *= self.subtree_success(c, s0_mask)
        return p


def _check_cap(resolved: ResolvedStructure) -> None:
    cap = MAX_EXACT_N_WITH_C if resolved.has_c_graph() else MAX_EXACT_N
    if resolved.n > cap:
        raise ComputationError(
            "N_TOO_LARGE",
            f"exact enumeration capped at n <= {cap} for this structure (got n={resolved.n}); "
            "use the iid form or Monte Carlo",
        )


def _outside_regime(resolved: ResolvedStructure) -> bool:
    # Thresholds below f + 1 are accepted but are outside the analysed regime.
    return any(m < resolved.f + 1 for m in resolved.m[1:])


def exact_reliability(g: ProtocolStructure, params: ClusterParams) -> ReliabilityResult:
    """Exact success probability by enumeration over activated-set chains."""
    resolved = validate_structure(g, params.n, params.f)
    _check_cap(resolved)
    ev = _ExactEvaluator(resolved, params)
    n, f = params.n, params.f
    rel = params.node_reliability
    total = 0.0
    for s0 in range(1 << n):
        if bin(s0).count("1") < n - f:
            continue
        p = 1.0
        for u in range(n):
            p *= rel[u] if s0 >> u & 1 else 1.0 - rel[u]
        total += p * ev.success_given_phase0(s0)
    detail = {"outside_regime": True} if _outside_regime(resolved) else None
    return ReliabilityResult.from_success(total, "exact", detail)


def _binom_pmf_frac(a: int, b: int, p: Fraction) -> Fraction:
    return math.comb(a, b) * p**b * (1 - p) ** (a - b)


def _iid_c_activation(x_prior: int, n: int, f: int, p_l: Fraction) -> Fraction:
    """Pr(one prior member receives >= n-f-1 of the x_prior - 1 deliveries)."""
    lo = n - f - 1
    if lo <= 0:
        return Fraction(1)
    return sum(
        (_binom_pmf_frac(x_prior - 1, k, p_l) for k in range(lo, x_prior)), Fraction(0)
    )


def exact_reliability_iid(
    g: ProtocolStructure, n: int, f: int, p_n: float, p_l: float
) -> ReliabilityResult:
    """Exact success probability when all nodes share p_n and all links share p_l.

    Evaluated over set sizes with exact rational arithmetic, so the returned
    failure probability is exact to the last float digit even when it is many
    orders of magnitude below 1.
    """
    resolved = validate_structure(g, n, f)
    pn, pl = Fraction(float(p_n)), Fraction(float(p_l))
    if not (0 <= pn <= 1 and 0 <= pl <= 1):
        raise ParamError("PROB_OUT_OF_RANGE", "probabilities must lie in [0, 1]")
    children = dependence_tree(g).children
    memo: dict[tuple[int, int], Fraction] = {}

    def branch(j: int, x_prior: int) -> Fraction:
        key = (j, x_prior)
        if key in memo:
            return memo[key]
        kind = resolved.kinds[j]
        p = pl if kind is not GraphKind.MANY_TO_MANY else _iid_c_activation(x_prior, n, f, pl)
        total = Fraction(0)
        for x in range(resolved.m[j], x_prior + 1):
            term = _binom_pmf_frac(x_prior, x, p)
            for c in children[j]:
                term *= branch(c, x)
            total += term
        memo[key] = total
        return total

    p_c = Fraction(0)
    for x0 in range(n - f, n + 1):
        term = _binom_pmf_frac(n, x0, pn)
        for c in children[0]:
            term *= branch(c, x0)
        p_c += term
    detail = {"outside_regime": True} if _outside_regime(resolved) else None
    return ReliabilityResult.from_failure(1 - p_c, "exact_iid", detail)


def node_only_reliability(g: ProtocolStructure, params: ClusterParams) -> ReliabilityResult:
    """Reliability with all link probabilities forced to 1.

    With perfect links the activated set never shrinks below the non-faulty
    set, so this is the probability that at least max(n - f, max_j M_j) nodes
    are non-faulty.
    """
    resolved = validate_structure(g, params.n, params.f)
    threshold = max(params.n - params.f, max(resolved.m[1:]))
    p_c = pbinom.tail_at_least(params.node_reliability, threshold)
    return ReliabilityResult.from_success(p_c, "exact", {"links": "perfect"})


def multi_instance_reliability(
    g: ProtocolStructure, params: ClusterParams, w: int, mode: str = "exact"
) -> float:
    """Probability that w consecutive instances all reach consensus.

    Faults are static across instances while link outcomes are redrawn per
    instance.  ``exact`` conditions on the fault set and raises the
    link-only conditional success to the w-th power; ``approx`` uses the
    first-order expansion w * P_C - (w - 1) * P_C_node, clamped to [0, 1].
    """
    if w < 1:
        raise ParamError("W_NONPOSITIVE", f"instance count must be >= 1, got {w}")
    if mode == "approx":
        p_c = exact_reliability(g, params).p_c
        p_node = node_only_reliability(g, params).p_c
        return min(max(w * p_c - (w - 1) * p_node, 0.0), 1.0)
    if mode != "exact":
        raise ParamError("PARAMS_INVALID", f"mode must be 'exact' or 'approx', got {mode!r}")
    resolved = validate_structure(g, params.n, params.f)
    _check_cap(resolved)
    ev = _ExactEvaluator(resolved, params)
    n, f = params.n, params.f
    rel = params.node_reliability
    total = 0.0
    for s0 in range(1 << n):
        if bin(s0).count("1") < n - f:
            continue
        p = 1.0
        for u in range(n):
            p *= rel[u] if s0 >> u & 1 else 1.0 - rel[u]
        total += p * ev.success_given_phase0(s0) ** w
    return min(max(total, 0.0), 1.0)
