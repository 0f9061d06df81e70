"""Approximations of the consensus failure rate, and the two gain laws.

The machinery here trades the exact nested-set sums for per-node *joint*
success probabilities (the probability a node stays activated through every
phase of a first-order chain).  On structures without a many-to-many graph the
joint form is an identity; many-to-many phases are handled by averaging a
node's activation probability over the possible prior sets.  Structures with
higher-order dependence are decomposed along their dependence tree: each
root-to-leaf path contributes an independent first-order failure term.

Approximations can exceed 1 outside their validity region (failure rates must
be small); outputs are clamped to [0, 1] and flagged when clamping occurred.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import pbinom
from .errors import ComputationError, ParamError
from .exact import ClusterParams, ReliabilityResult
from .protocols import (
    Component,
    GraphKind,
    ProtocolStructure,
    first_order_paths,
    validate_structure,
)


@dataclass(frozen=True)
class JointReliabilityVector:
    """Per-node probability of staying activated from phase 0 to the end."""

    p_joint: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p_joint, dtype=float)
        if np.any((arr < 0.0) | (arr > 1.0)):
            raise ParamError("PROB_OUT_OF_RANGE", "joint reliabilities must lie in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "p_joint", arr)

    @property
    def p_joint_failure(self) -> np.ndarray:
        return 1.0 - self.p_joint

    @classmethod
    def from_failures(cls, p_jf) -> "JointReliabilityVector":
        return cls(1.0 - np.asarray(p_jf, dtype=float))


def _avg_c_tail_by_size(sender_probs: np.ndarray, threshold: int) -> np.ndarray:
    """avg[w] = mean over uniform w-subsets of senders of Pr(>= threshold deliveries).

    One pass of an O(m^2 * threshold) DP over (chosen count, delivered count
    saturated at threshold) yields all subset sizes at once.
    """
    m = len(sender_probs)
    t = max(threshold, 0)
    dp = np.zeros((m + 1, t + 1))
    dp[0, 0] = 1.0
    for p in sender_probs:
        new = dp.copy()  # sender not chosen
        for k in range(m):
            row = dp[k]
            if not row.any():
                continue
            # chosen and delivered: count advances, saturating at t
            new[k + 1, 1 : t + 1] += row[:t] * p
            new[k + 1, t] += row[t] * p
            # chosen and lost
            new[k + 1, : t + 1] += row * (1.0 - p)
        dp = new
    avg = np.zeros(m + 1)
    for w in range(m + 1):
        avg[w] = dp[w, t] / math.comb(m, w)
    return avg


def c_graph_avg_activation(component: Component, params: ClusterParams, node: int) -> float:
    """Prior-set-averaged activation probability of ``node`` in a many-to-many phase.

    Uniform averages over prior sets of each size w = n-f-1 .. n-1 are combined
    by a power mean of order f + 1.  Tight when link reliabilities are near 1.
    """
    if component.kind is not GraphKind.MANY_TO_MANY:
        raise ComputationError("NOT_C_GRAPH", f"phase graph is {component.kind.value}, not C")
    n, f = params.n, params.f
    senders = [u for u in range(n) if u != node]
    avg = _avg_c_tail_by_size(params.link_mesh[senders, node], n - f - 1)
    sizes = range(n - f - 1, n)
    mean_pow = sum(avg[w] ** (f + 1) for w in sizes) / (f + 1)
    return float(mean_pow ** (1.0 / (f + 1)))


def c_graph_avg_activation_iid(n: int, f: int, p_l: float) -> float:
    """Closed form of the averaged many-to-many activation for identical links."""
    t = n - f - 1
    if t <= 0:
        return 1.0
    vals = []
    for a in range(n - f, n + 1):
        inner = sum(
            math.comb(a - 1, k) * p_l**k * (1.0 - p_l) ** (a - 1 - k) for k in range(t, a)
        )
        vals.append(inner)
    return float((sum(v ** (f + 1) for v in vals) / (f + 1)) ** (1.0 / (f + 1)))


def _require_first_order_nf(g: ProtocolStructure, n: int, f: int):
    resolved = validate_structure(g, n, f)
    if any(c.r != 1 for c in g.components):
        raise ComputationError(
            "NOT_FIRST_ORDER", f"{g.name!r} has dependence offsets > 1; decompose by paths first"
        )
    if any(m != n - f for m in resolved.m[1:]):
        raise ComputationError("M_NOT_NF", f"{g.name!r} has phases with threshold != n - f")
    return resolved


def _phase_activation(kind: GraphKind, comp: Component, params: ClusterParams, node: int) -> float:
    if kind is GraphKind.ONE_TO_MANY:
        return float(params.link_down[node])
    if kind is GraphKind.MANY_TO_ONE:
        return float(params.link_up[node])
    return c_graph_avg_activation(comp, params, node)


def joint_reliability_vector(g: ProtocolStructure, params: ClusterParams) -> JointReliabilityVector:
    """Per-node joint success over a first-order, all-(n-f)-threshold structure."""
    _require_first_order_nf(g, params.n, params.f)
    p = np.array(params.node_reliability, dtype=float)
    for comp in g.components:
        for i in range(params.n):
            p[i] *= _phase_activation(comp.kind, comp, params, i)
    return JointReliabilityVector(p)


def joint_reliability(g: ProtocolStructure, params: ClusterParams) -> ReliabilityResult:
    """Success probability from per-node joint reliabilities.

    Exact (an identity with the nested-set sum) when the structure has no
    many-to-many graph; otherwise the averaged activation makes it an
    approximation that tightens as link reliability approaches 1.
    """
    jv = joint_reliability_vector(g, params)
    p_f = pbinom.tail_at_least(jv.p_joint_failure, params.f + 1)
    return ReliabilityResult.from_failure(p_f, "joint", {"joint": jv.p_joint})


@dataclass(frozen=True)
class PowerSeriesExpansion:
    """Failure rate as the alternating series in joint-failure subset products.

    a[t] = (-1)^(t-f-1) * C(t-1, f) and q[t] is the sum over size-t node
    subsets of their joint-failure product, for t = f+1 .. n.  ``p_f`` is the
    series truncated at ``t_max`` (clamped to [0, 1]; ``p_f_raw`` unclamped).
    """

    f: int
    n: int
    t_max: int
    a: np.ndarray
    q: np.ndarray
    p_f: float
    p_f_raw: float
    clamped: bool

    def term(self, t: int) -> float:
        """a_t * Q_t for t in f+1..n."""
        return float(self.a[t - self.f - 1] * self.q[t - self.f - 1])


def power_series_failure(
    jf: JointReliabilityVector | np.ndarray, n: int, f: int, t_max: Optional[int] = None
) -> PowerSeriesExpansion:
    """Evaluate the alternating failure series truncated at t_max.

    ``jf`` holds per-node joint-failure probabilities.  t_max = f + 1 keeps
    only the first non-zero term; t_max = n reproduces the joint-reliability
    failure rate exactly.
    """
    q_nodes = jf.p_joint_failure if isinstance(jf, JointReliabilityVector) else np.asarray(jf, dtype=float)
    if len(q_nodes) != n:
        raise ParamError("PARAMS_INVALID", f"expected {n} joint failures, got {len(q_nodes)}")
    if t_max is None:
        t_max = n
    if not f + 1 <= t_max <= n:
        raise ComputationError(
            "TRUNCATION_OUT_OF_RANGE", f"t_max must lie in [{f + 1}, {n}], got {t_max}"
        )
    e = pbinom.elementary_symmetric(q_nodes)
    ts = np.arange(f + 1, n + 1)
    a = np.array([(-1.0) ** (t - f - 1) * math.comb(t - 1, f) for t in ts])
    q = e[f + 1 :]
    raw = float(np.sum(a[: t_max - f] * q[: t_max - f]))
    p_f = min(max(raw, 0.0), 1.0)
    return PowerSeriesExpansion(f, n, t_max, a, q, p_f, raw, clamped=p_f != raw)


def path_joint_failures(
    g: ProtocolStructure, params: ClusterParams, path: tuple[int, ...]
) -> np.ndarray:
    """Per-node joint failure along one dependence path (phase 0 included)."""
    p = np.array(params.node_reliability, dtype=float)
    for j in path:
        if j == 0:
            continue
        comp = g.components[j - 1]
        for i in range(params.n):
            p[i] *= _phase_activation(comp.kind, comp, params, i)
    return 1.0 - p


def tree_decomposed_failure(g: ProtocolStructure, params: ClusterParams) -> ReliabilityResult:
    """Failure rate as the sum of first-order terms over dependence-tree paths.

    Each root-to-leaf path (truncated to its n-f-threshold phases) contributes
    the sum over size-(f+1) subsets of per-node path joint failures.
    """
    paths = first_order_paths(g, params.n, params.f)
    terms = []
    for path in paths:
        q = path_joint_failures(g, params, path)
        e = pbinom.elementary_symmetric(q)
        terms.append(float(e[params.f + 1]))
    raw = float(sum(terms))
    p_f = min(max(raw, 0.0), 1.0)
    return ReliabilityResult.from_failure(
        p_f, "tree_approx", {"clamped": p_f != raw, "path_failures": tuple(terms), "paths": tuple(paths)}
    )


@dataclass(frozen=True)
class OverallJointFailure:
    """Power-mean combination of per-path joint failure rates (iid clusters)."""

    value: float
    per_path: tuple[float, ...]
    paths: tuple[tuple[int, ...], ...]


def overall_joint_failure_rate_iid(
    g: ProtocolStructure, n: int, f: int, p_n: float, p_l: float
) -> OverallJointFailure:
    """p_jfr = ((sum_l p_jfr_l^(f+1)))^(1/(f+1)) over first-order paths."""
    paths = first_order_paths(g, n, f)
    per_path = []
    for path in paths:
        prod = p_n
        for j in path:
            if j == 0:
                continue
            kind = g.components[j - 1].kind
            prod *= p_l if kind is not GraphKind.MANY_TO_MANY else c_graph_avg_activation_iid(n, f, p_l)
        per_path.append(1.0 - prod)
    value = sum(q ** (f + 1) for q in per_path) ** (1.0 / (f + 1))
    return OverallJointFailure(float(value), tuple(per_path), tuple(paths))


def iid_first_order_failure(n: int, f: int, p_jfr: float) -> float:
    """First-order iid failure rate C(n, f+1) * p_jfr^(f+1), clamped to [0, 1]."""
    if not 0.0 <= p_jfr <= 1.0:
        raise ParamError("PROB_OUT_OF_RANGE", f"p_jfr must lie in [0, 1], got {p_jfr}")
    return min(math.comb(n, f + 1) * p_jfr ** (f + 1), 1.0)


@dataclass(frozen=True)
class GainReport:
    """Linear law for log10 of the failure rate.

    For the reliability gain the law is log10(p_F) = slope * log10(p_jfr) +
    intercept.  For the tolerance gain it is log10(p_F) = slope * f +
    intercept, where the intercept already folds in the fault-count complement
    delta_f and any cluster-size offset; ``predicted_log_pf_linear`` drops
    delta_f.
    """

    family: Optional[str]
    slope: float
    intercept: float
    delta_f: float
    predicted_log_pf: Optional[float] = None
    predicted_log_pf_linear: Optional[float] = None

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def reliability_gain(n: int, f: int) -> GainReport:
    """Slope f+1 and intercept log10 C(n, f+1) of log failure vs log joint failure."""
    if not 0 <= f < n:
        raise ParamError("PARAMS_INVALID", f"need 0 <= f < n, got n={n}, f={f}")
    return GainReport(None, float(f + 1), math.log10(math.comb(n, f + 1)), 0.0)


_TG_FORMS = {"cft": ("2f", "2f+1"), "bft": ("3f", "3f+1", "3f+2")}


def tolerance_gain(family: str, n_form: str, f: int, p_jfr: float) -> GainReport:
    """Slope/intercept of log failure vs fault tolerance f, for one cluster-size law.

    family 'cft' with n = 2f or 2f+1, or 'bft' with n = 3f, 3f+1 or 3f+2.
    The fault-count complement delta_f = -log10(f)/2 is included in the
    intercept (it shrinks the Stirling error of the binomial coefficient).
    """
    if f < 1:
        raise ParamError("PARAMS_INVALID", f"tolerance gain needs f >= 1, got {f}")
    if not 0.0 < p_jfr < 1.0:
        raise ParamError("PROB_OUT_OF_RANGE", f"p_jfr must lie in (0, 1), got {p_jfr}")
    if family not in _TG_FORMS or n_form not in _TG_FORMS[family]:
        raise ComputationError("INVALID_CASE", f"no tolerance-gain case for {family!r}, n={n_form!r}")
    log = math.log10
    p_jr = 1.0 - p_jfr
    delta_f = -0.5 * log(f)
    if family == "cft":
        slope = log(p_jfr) + log(p_jr) + 2 * log(2)
        base = log(p_jfr / (p_jr * math.sqrt(math.pi)))
        offset = log(2 * p_jr) if n_form == "2f+1" else 0.0
    else:
        slope = log(p_jfr) + 2 * log(p_jr) + 3 * log(3) - 2 * log(2)
        base = log(math.sqrt(3) * p_jfr / (math.sqrt(math.pi) * p_jr))
        offset = {"3f": 0.0, "3f+1": log(3 * p_jr / 2), "3f+2": 2 * log(3 * p_jr / 2)}[n_form]
    intercept = base + delta_f + offset
    predicted = slope * f + intercept
    return GainReport(family, slope, intercept, delta_f, predicted, predicted - delta_f)


def hotstuff_variant_ratio(f: int) -> float:
    """Closed-form failure-rate ratio of the phase-0-anchored Hotstuff variant.

    (3 * 2^(f+1) + 1) / (2^(f+1) + 3^(f+1) + 2 * 4^(f+1)), bounded by 2^-f.
    """
    if f < 1:
        raise ParamError("PARAMS_INVALID", f"need f >= 1, got {f}")
    return (3 * 2 ** (f + 1) + 1) / (2 ** (f + 1) + 3 ** (f + 1) + 2 * 4 ** (f + 1))
