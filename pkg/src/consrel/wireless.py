"""Wireless link loss and transmit-power allocation for log replication.

Link loss follows the Rayleigh outage law 1 - exp(-gamma_th / SNR).  The
cluster failure rate (exact for a leader/follower round-trip exchange) is the
alternating series over per-node joint failures q_i = 1 - (1 - loss_i)^2, the
same loss applying to the downlink and uplink that share node i's power
budget (hence the factor 2 in the budget constraint).

``optimize_power`` splits a total transmit power across nodes to minimize the
failure rate with a multi-start SQP solver; the equal split is both the
reference baseline and the fallback, so the result never loses to it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import pbinom
from .errors import ComputationError, ParamError
from .exact import exact_reliability_iid
from .protocols import builtin_protocol, default_fault_threshold, protocol_family
from .rng import STREAM_OPTIMIZER, substream

N_RANDOM_STARTS = 15  # plus the equal split


def db_to_linear(x_db) -> np.ndarray | float:
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class WirelessScenario:
    """Physical parameters, all in linear units (watts and ratios)."""

    n: int
    f: int
    gamma_th: float
    p_noise: np.ndarray
    gain: np.ndarray
    p_total: float

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.f < self.n:
            raise ParamError("PARAMS_INVALID", f"need 0 <= f < n, got n={self.n}, f={self.f}")
        noise = np.array(np.broadcast_to(np.asarray(self.p_noise, dtype=float), (self.n,)))
        gain = np.array(np.broadcast_to(np.asarray(self.gain, dtype=float), (self.n,)))
        if self.gamma_th <= 0 or np.any(noise <= 0) or np.any(gain <= 0):
            raise ParamError("PARAMS_INVALID", "gamma_th, noise and gains must be positive")
        if self.p_total <= 0:
            raise ComputationError("INFEASIBLE", f"power budget must be positive, got {self.p_total}")
        noise.setflags(write=False)
        gain.setflags(write=False)
        object.__setattr__(self, "p_noise", noise)
        object.__setattr__(self, "gain", gain)


def load_scenario(text: str) -> WirelessScenario:
    """Parse the scenario JSON (gains and target SNR given in dB)."""
    doc = json.loads(text)
    return WirelessScenario(
        n=int(doc["n"]),
        f=int(doc["f"]),
        gamma_th=float(db_to_linear(doc["gamma_th_db"])),
        p_noise=np.asarray(doc["p_noise_w"], dtype=float),
        gain=db_to_linear(doc["gain_db"]),
        p_total=float(doc["p_total_w"]),
    )


@dataclass(frozen=True)
class PowerAllocation:
    """Per-node directional link power with the losses and objective it yields."""

    p_tr: np.ndarray
    link_loss: np.ndarray
    joint_failure: np.ndarray
    p_f: float
    p_total: float

    def __post_init__(self):
        if abs(2.0 * float(np.sum(self.p_tr)) - self.p_total) > 1e-9:
            raise ParamError("PARAMS_INVALID", "allocation does not meet the power budget")


def rayleigh_link_loss(gamma_th: float, gain, p_tr, p_noise):
    """Outage probability 1 - exp(-gamma_th * p_noise / (gain * p_tr)).

    Accepts scalars or arrays; p_tr = 0 gives loss 1 (the zero-power limit).
    """
    gain = np.asarray(gain, dtype=float)
    p_tr = np.asarray(p_tr, dtype=float)
    p_noise = np.asarray(p_noise, dtype=float)
    with np.errstate(divide="ignore"):
        exponent = np.where(p_tr > 0, gamma_th * p_noise / (gain * np.maximum(p_tr, 1e-300)), np.inf)
    loss = 1.0 - np.exp(-exponent)
    return float(loss) if loss.ndim == 0 else loss


def raft_failure_from_losses(losses, n: int, f: int) -> float:
    """Round-trip failure rate from per-node link losses (exact alternating series)."""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (n,):
        raise ParamError("PARAMS_INVALID", f"expected {n} losses, got shape {losses.shape}")
    q = 1.0 - (1.0 - losses) ** 2
    e = pbinom.elementary_symmetric(q)
    p_f = 0.0
    for t in range(f + 1, n + 1):
        p_f += (-1.0) ** (t - f - 1) * math.comb(t - 1, f) * e[t]
    return min(max(p_f, 0.0), 1.0)


def _objective_and_grad(s: WirelessScenario, p: np.ndarray):
    c = s.gamma_th * s.p_noise / s.gain
    with np.errstate(divide="ignore"):
        surv = np.where(p > 0, np.exp(-c / np.maximum(p, 1e-300)), 0.0)  # 1 - loss
    q = 1.0 - surv**2
    e = pbinom.elementary_symmetric(q)
    obj = 0.0
    coeff = np.zeros(s.n + 1)
    for t in range(s.f + 1, s.n + 1):
        a_t = (-1.0) ** (t - s.f - 1) * math.comb(t - 1, s.f)
        obj += a_t * e[t]
        coeff[t] = a_t
    grad = np.zeros(s.n)
    for i in range(s.n):
        e_wo = pbinom.elementary_symmetric_without(e, q[i])
        dpf_dq = sum(coeff[t] * e_wo[t - 1] for t in range(s.f + 1, s.n + 1))
        if p[i] > 0:
            dsurv_dp = surv[i] * c[i] / p[i] ** 2
        else:
            dsurv_dp = 0.0
        grad[i] = dpf_dq * (-2.0 * surv[i]) * dsurv_dp
    return obj, grad


def equal_split_allocation(s: WirelessScenario) -> PowerAllocation:
    """The uninformed baseline: every directional link gets p_total / (2n)."""
    p = np.full(s.n, s.p_total / (2 * s.n))
    return _allocation_from_powers(s, p)


def _allocation_from_powers(s: WirelessScenario, p: np.ndarray) -> PowerAllocation:
    loss = rayleigh_link_loss(s.gamma_th, s.gain, p, s.p_noise)
    q = 1.0 - (1.0 - loss) ** 2
    return PowerAllocation(p, loss, q, raft_failure_from_losses(loss, s.n, s.f), s.p_total)


def optimize_power(s: WirelessScenario, seed: int = 0) -> PowerAllocation:
    """Minimize the failure rate over power splits meeting 2 * sum(p) = p_total.

    Multi-start SQP (equal split plus seeded Dirichlet-random starts); the
    best feasible result is returned, falling back to the equal split if no
    start improves on it.  Deterministic for a given seed.
    """
    half = s.p_total / 2.0
    constraints = [{"type": "eq", "fun": lambda x: np.sum(x) - half, "jac": lambda x: np.ones_like(x)}]
    bounds = [(0.0, half)] * s.n

    starts = [np.full(s.n, half / s.n)]
    rng = substream(seed, STREAM_OPTIMIZER)
    for _ in range(N_RANDOM_STARTS):
        starts.append(rng.dirichlet(np.ones(s.n)) * half)

    best_p, best_obj = starts[0], _objective_and_grad(s, starts[0])[0]
    for x0 in starts:
        res = minimize(
            lambda x: _objective_and_grad(s, x),
            x0,
            jac=True,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": 200, "ftol": 1e-14},
        )
        x = np.clip(res.x, 0.0, None)
        total = float(np.sum(x))
        if total <= 0:
            continue
        x *= half / total
        obj = _objective_and_grad(s, x)[0]
        if obj < best_obj:
            best_p, best_obj = x, obj
    return _allocation_from_powers(s, best_p)


def node_count_sweep(protocol: str, p_n: float, p_l: float, n_values) -> list[tuple[int, int, float]]:
    """Failure rate of a protocol as the cluster grows, f per its family rule."""
    n_values = list(n_values)
    if any(b < a for a, b in zip(n_values, n_values[1:])):
        raise ParamError("PARAMS_INVALID", "n_values must be ascending")
    g = builtin_protocol(protocol)
    family = protocol_family(protocol)
    rows = []
    for n in n_values:
        f = default_fault_threshold(family, n)
        rows.append((n, f, exact_reliability_iid(g, n, f, p_n, p_l).p_f))
    return rows
