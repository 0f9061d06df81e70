"""Analytic latency of a consensus system with per-attempt failure.

A failed instance is reattempted until it succeeds, so transmission latency is
geometric in the attempt count.  Reattempts serialize the commit order of an
append-only log, which is modelled as an M/G/1 FCFS queue whose service time
is the reattempt overhead; the mean wait follows the Pollaczek-Khinchine
formula.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ComputationError, ParamError


@dataclass(frozen=True)
class LatencyParams:
    """Single-attempt latency l_c, per-attempt failure rate p_f, arrival rate,
    and the simulator-facing reattempt timeout (defaults to l_c)."""

    l_c: float
    p_f: float
    arrival_rate: float
    l_timeout: float | None = None

    def __post_init__(self):
        if self.l_c <= 0:
            raise ParamError("PARAMS_INVALID", f"l_c must be > 0, got {self.l_c}")
        if not 0.0 <= self.p_f < 1.0:
            raise ParamError("PF_IS_ONE" if self.p_f >= 1 else "PROB_OUT_OF_RANGE",
                             f"p_f must lie in [0, 1), got {self.p_f}")
        if self.arrival_rate <= 0:
            raise ParamError("PARAMS_INVALID", f"arrival_rate must be > 0, got {self.arrival_rate}")
        if self.l_timeout is None:
            object.__setattr__(self, "l_timeout", self.l_c)
        elif self.l_timeout < self.l_c:
            raise ParamError("PARAMS_INVALID", "l_timeout must be >= l_c")


@dataclass(frozen=True)
class LatencyReport:
    e_transmission: float
    e_queuing: float
    e_serve: float
    var_serve: float
    utilization: float

    @property
    def e_total(self) -> float:
        """Mean per-instance latency: transmission plus queueing."""
        return self.e_transmission + self.e_queuing


def transmission_latency_pmf(p: LatencyParams, k: int) -> float:
    """Pr(the instance needs exactly k attempts), i.e. latency k * l_c."""
    if k < 1:
        raise ParamError("K_NONPOSITIVE", f"attempt count must be >= 1, got {k}")
    return p.p_f ** (k - 1) * (1.0 - p.p_f)


def expected_transmission_latency(p: LatencyParams) -> float:
    """Mean transmission latency l_c / (1 - p_f)."""
    return p.l_c / (1.0 - p.p_f)


def queuing_latency(p: LatencyParams) -> LatencyReport:
    """Mean queueing wait from the Pollaczek-Khinchine formula.

    Service time is the reattempt overhead T = L_tr - l_c, with
    E(T) = p_f * l_c / (1 - p_f) and Var(T) = p_f * l_c^2 / (1 - p_f)^2.
    Raises UNSTABLE_QUEUE when arrivals outpace the server.
    """
    e_serve = p.p_f * p.l_c / (1.0 - p.p_f)
    var_serve = p.p_f * p.l_c**2 / (1.0 - p.p_f) ** 2
    utilization = e_serve * p.arrival_rate
    if utilization >= 1.0:
        raise ComputationError(
            "UNSTABLE_QUEUE",
            f"utilization {utilization:.3f} >= 1; queue grows without bound",
        )
    e_q = (var_serve + e_serve**2) / (2.0 * (1.0 / p.arrival_rate - e_serve))
    return LatencyReport(expected_transmission_latency(p), e_q, e_serve, var_serve, utilization)
