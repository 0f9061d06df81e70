"""Monte Carlo and discrete-event validation of the analytic results.

Two simulators:

* phase-level consensus trials that sample node faults once per trial and
  link deliveries per phase, applying the activation rules literally; and
* a log-replication latency simulator with Poisson arrivals, per-attempt
  failure, timeout-driven reattempts and in-order commits.  Attempts of
  distinct instances run in parallel; only the commit order is serialized,
  so instance i commits at max(its own finish time, commit of instance i-1).

All randomness flows through named Philox substreams (see :mod:`consrel.rng`),
so a (config, seed) pair reproduces a trace bit-for-bit regardless of
batching.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParamError
from .exact import ClusterParams
from .protocols import GraphKind, ProtocolStructure, validate_structure
from .rng import STREAM_ARRIVALS, STREAM_ATTEMPTS, STREAM_TRIALS, substream

TRIAL_CHUNK = 1 << 16


@dataclass(frozen=True)
class TrialOutcome:
    """One sampled trial: overall success and the per-phase activated sets."""

    success: bool
    activated: tuple[frozenset[int], ...]


def _sample_phases(
    rng: np.random.Generator, resolved, params: ClusterParams, m: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Sample m trials; returns (ok vector, per-phase activation matrices)."""
    n, f = params.n, params.f
    an0 = rng.random((m, n)) < params.node_reliability
    ok = an0.sum(axis=1) >= n - f
    phases = [an0]
    for j in range(1, resolved.n_phases + 1):
        prior = phases[resolved.parents[j]]
        kind = resolved.kinds[j]
        if kind is GraphKind.ONE_TO_MANY:
            act = prior & (rng.random((m, n)) < params.link_down)
        elif kind is GraphKind.MANY_TO_ONE:
            act = prior & (rng.random((m, n)) < params.link_up)
        else:
            deliv = rng.random((m, n, n)) < params.link_mesh
            counts = np.einsum("mu,mui->mi", prior, deliv, dtype=np.int64)
            counts -= prior * deliv[:, np.arange(n), np.arange(n)]
            act = prior & (counts >= n - f - 1)
        phases.append(act)
        ok &= act.sum(axis=1) >= resolved.m[j]
    return ok, phases


def simulate_consensus_trials(
    g: ProtocolStructure,
    params: ClusterParams,
    trials: int,
    seed: int = 0,
    capture: bool = False,
):
    """Estimate the success probability by sampled trials.

    Returns (p_hat, standard_error); with ``capture=True`` additionally
    returns the list of TrialOutcome records (keep ``trials`` small).
    """
    if trials < 1:
        raise ParamError("PARAMS_INVALID", f"trials must be >= 1, got {trials}")
    resolved = validate_structure(g, params.n, params.f)
    successes = 0
    outcomes: list[TrialOutcome] = []
    for chunk, lo in enumerate(range(0, trials, TRIAL_CHUNK)):
        m = min(TRIAL_CHUNK, trials - lo)
        rng = substream(seed, STREAM_TRIALS, chunk)
        ok, phases = _sample_phases(rng, resolved, params, m)
        successes += int(ok.sum())
        if capture:
            for t in range(m):
                sets = tuple(frozenset(np.flatnonzero(p[t])) for p in phases)
                outcomes.append(TrialOutcome(bool(ok[t]), sets))
    p_hat = successes / trials
    se = math.sqrt(p_hat * (1.0 - p_hat) / trials)
    return (p_hat, se, outcomes) if capture else (p_hat, se)


@dataclass(frozen=True)
class SimConfig:
    """Latency-simulation settings.

    The per-attempt failure source is either a fixed probability ``p_f`` or a
    (structure, params) pair resampled per attempt.  Give exactly one of
    ``instance_count`` or ``duration``.
    """

    arrival_rate: float
    l_c: float
    l_timeout: float
    instance_count: Optional[int] = None
    duration: Optional[float] = None
    p_f: Optional[float] = None
    structure: Optional[ProtocolStructure] = None
    params: Optional[ClusterParams] = None
    seed: int = 0

    def __post_init__(self):
        if self.arrival_rate <= 0 or self.l_c <= 0:
            raise ParamError("PARAMS_INVALID", "arrival_rate and l_c must be positive")
        if self.l_timeout < self.l_c:
            raise ParamError("PARAMS_INVALID", "l_timeout must be >= l_c")
        if (self.instance_count is None) == (self.duration is None):
            raise ParamError("PARAMS_INVALID", "give exactly one of instance_count or duration")
        if self.instance_count is not None and self.instance_count < 1:
            raise ParamError("PARAMS_INVALID", "instance_count must be >= 1")
        fixed = self.p_f is not None
        full = self.structure is not None and self.params is not None
        if fixed == full:
            raise ParamError("PARAMS_INVALID", "give either p_f or (structure, params)")
        if fixed and not 0.0 <= self.p_f < 1.0:
            raise ParamError("PARAMS_INVALID", f"p_f must lie in [0, 1), got {self.p_f}")


@dataclass(frozen=True)
class SimTrace:
    """Per-instance timing records; commit times are non-decreasing."""

    arrival: np.ndarray
    attempts: np.ndarray
    finish: np.ndarray
    commit: np.ndarray
    latency: np.ndarray

    def __len__(self) -> int:
        return len(self.arrival)


def _attempt_failures(cfg: SimConfig, n_instances: int, round_idx: int) -> np.ndarray:
    """Failure indicator for one attempt round of every instance."""
    rng = substream(cfg.seed, STREAM_ATTEMPTS, round_idx)
    if cfg.p_f is not None:
        return rng.random(n_instances) < cfg.p_f
    resolved = validate_structure(cfg.structure, cfg.params.n, cfg.params.f)
    ok = np.zeros(n_instances, dtype=bool)
    for lo in range(0, n_instances, TRIAL_CHUNK):
        m = min(TRIAL_CHUNK, n_instances - lo)
        ok[lo : lo + m] = _sample_phases(rng, resolved, cfg.params, m)[0]
    return ~ok


def simulate_raft_latency(cfg: SimConfig) -> SimTrace:
    """Simulate arrivals, reattempts and in-order commits of a replicated log.

    finish_i = arrival_i + (K_i - 1) * l_timeout + l_c where K_i counts the
    attempts of instance i; commit_i = max(finish_i, commit_{i-1}).
    """
    rng = substream(cfg.seed, STREAM_ARRIVALS)
    if cfg.instance_count is not None:
        inter = rng.exponential(1.0 / cfg.arrival_rate, size=cfg.instance_count)
        arrival = np.cumsum(inter)
    else:
        blocks = []
        total = 0.0
        while True:
            inter = rng.exponential(1.0 / cfg.arrival_rate, size=4096)
            blocks.append(inter)
            total += float(inter.sum())
            if total > cfg.duration:
                break
        arrival = np.cumsum(np.concatenate(blocks))
        arrival = arrival[arrival <= cfg.duration]
        if len(arrival) == 0:
            raise ParamError("EMPTY_TRACE", "no arrivals within the configured duration")
    n = len(arrival)

    attempts = np.ones(n, dtype=np.int64)
    pending = np.arange(n)
    round_idx = 0
    while pending.size:
        # Full-length draws keyed by the round keep each instance's outcome a
        # pure function of (seed, round, instance), independent of batching.
        failed_all = _attempt_failures(cfg, n, round_idx)
        failed = failed_all[pending]
        attempts[pending[failed]] += 1
        pending = pending[failed]
        round_idx += 1

    finish = arrival + (attempts - 1) * cfg.l_timeout + cfg.l_c
    commit = np.maximum.accumulate(finish)
    return SimTrace(arrival, attempts, finish, commit, commit - arrival)


@dataclass(frozen=True)
class TraceSummary:
    mean_latency: float
    percentile_latency: dict = field(compare=False)
    mean_attempts: float
    empirical_p_f: float
    instances: int
    total_attempts: int


def summarize_trace(trace: SimTrace, percentiles=(50, 90, 99)) -> TraceSummary:
    """Latency and attempt statistics; percentiles by nearest rank."""
    n = len(trace)
    if n == 0:
        raise ParamError("EMPTY_TRACE", "trace has no instances")
    latency = np.sort(trace.latency)
    pct = {}
    for q in percentiles:
        rank = max(int(math.ceil(q / 100.0 * n)), 1)
        pct[q] = float(latency[rank - 1])
    total_attempts = int(trace.attempts.sum())
    return TraceSummary(
        mean_latency=float(trace.latency.mean()),
        percentile_latency=pct,
        mean_attempts=total_attempts / n,
        empirical_p_f=1.0 - n / total_attempts,
        instances=n,
        total_attempts=total_attempts,
    )


TRACE_HEADER = "index,arrival,attempts,finish,commit,latency"


def format_trace_csv(trace: SimTrace) -> str:
    """RFC-4180 CSV with times in seconds at 6 decimal places."""
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\r\n")
    for i in range(len(trace)):
        buf.write(
            f"{i},{trace.arrival[i]:.6f},{trace.attempts[i]},"
            f"{trace.finish[i]:.6f},{trace.commit[i]:.6f},{trace.latency[i]:.6f}\r\n"
        )
    return buf.getvalue()
