"""Multi-channel transfers: water-filling and the per-partition allocation.

With ``K`` parallel subchannels an uplink edge moving ``n`` second-nats at
powers ``p`` costs ``n * sum(p) / R(p)`` joules and ``n / R(p)`` seconds,
where ``R(p) = sum_k ln(1 + a_k p_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import CallGraph, ComputeConfig
from .radio import RadioConfig, effective_bits
from .single_solver import (
    INFEASIBLE,
    OPTIMAL,
    Assignment,
    FeasibilityRecord,
    InfeasibleError,
    TransferSets,
    compute_time,
    residual_latency,
    transfer_sets,
)

__all__ = [
    "MultiAllocation",
    "SolutionMulti",
    "WaterfillResult",
    "evaluate_partition_multi",
    "feasibility_multi",
    "min_power_for_rate",
    "solve_p4",
    "waterfill",
]

# subchannels weaker than this are treated as absent
MIN_GAIN = 1e-15


@dataclass(frozen=True)
class WaterfillResult:
    powers: np.ndarray
    water_level: float
    rate_nats: float
    iterations: int


@dataclass(frozen=True)
class MultiAllocation:
    """Per-edge power vectors (rows ordered like the uplink edges)."""

    powers: np.ndarray
    rates: np.ndarray
    target_rate: float
    multiplier: float


@dataclass
class SolutionMulti:
    assignment: Assignment
    status: str
    total_energy_j: float
    total_delay_s: float
    power_w: dict = field(default_factory=dict)
    rate_nats: dict = field(default_factory=dict)
    bits_per_symbol: dict = field(default_factory=dict)
    latency_multiplier: float = 0.0
    feasibility: FeasibilityRecord | None = None


def _usable(a_vec) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a_vec, dtype=float).ravel()
    if a.size == 0 or np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("gains must be a nonempty vector of nonnegative finite numbers")
    idx = np.flatnonzero(a > MIN_GAIN)
    if idx.size == 0:
        raise ValueError("no subchannel has a usable gain")
    # strongest first; stable so equal gains keep their input order
    order = idx[np.argsort(-a[idx], kind="stable")]
    return a, order


def waterfill(a_vec, P_T: float) -> WaterfillResult:
    """Rate-maximizing split of ``P_T`` over parallel channels.

    Channels are activated strongest first; with ``n`` active channels the
    level is ``mu = (P_T + sum 1/a_k) / n`` and the next channel joins only
    if ``mu`` exceeds its ``1/a``. At most ``K`` iterations.
    """
    if not P_T > 0:
        raise ValueError("power budget must be positive")
    a, order = _usable(a_vec)
    inv = 1.0 / a[order]
    mu = P_T + inv[0]
    n_active = 1
    iterations = 1
    for n in range(2, order.size + 1):
        if mu <= inv[n - 1]:
            break
        iterations += 1
        candidate = (P_T + math.fsum(inv[:n])) / n
        if candidate <= inv[n - 1]:
            break
        mu, n_active = candidate, n
    powers = np.zeros_like(a)
    # (P_T + sum_j (1/a_j - 1/a_k)) / n, not mu - 1/a_k, which cancels when 1/a_k >> P_T
    act = inv[:n_active]
    powers[order[:n_active]] = (P_T + np.sum(act[None, :] - act[:, None], axis=1)) / n_active
    rate = float(np.sum(np.log1p(a * powers)))
    return WaterfillResult(powers, mu, rate, iterations)


def min_power_for_rate(a_vec, R: float, P_T: float = math.inf) -> np.ndarray:
    """Least total power reaching sum rate ``R`` nats per symbol.

    The optimum has the water-filling shape ``p_k = [nu - 1/a_k]^+``; with
    ``n`` active channels ``nu = exp((R - sum ln a_k) / n)``.

    Raises
    ------
    InfeasibleError
        If the minimum power exceeds ``P_T``.
    """
    a, order = _usable(a_vec)
    powers = np.zeros_like(a)
    if R <= 0:
        return powers
    log_a = np.log(a[order])
    if R / order.size > 700.0:
        # some channel would need exp(700) / a_k watts
        raise InfeasibleError(f"rate {R:.6g} is beyond any finite power")
    # the level nu is tracked as ln(nu); channel k joins when ln(nu) > -ln(a_k)
    log_nu = R - log_a[0]
    n_active = 1
    for n in range(2, order.size + 1):
        if log_nu <= -log_a[n - 1]:
            break
        candidate = (R - math.fsum(log_a[:n])) / n
        if candidate <= -log_a[n - 1]:
            break
        log_nu, n_active = candidate, n
    active = order[:n_active]
    # ln(nu a_k) = R/n + mean_j ln(a_k / a_j); forming it from ln(nu) cancels at small R
    act = a[active]
    t = R / n_active + np.mean(np.log(act[:, None] / act[None, :]), axis=1)
    powers[active] = np.expm1(t) / act
    total = float(powers.sum())
    if total > P_T * (1 + 1e-12):
        raise InfeasibleError(f"rate {R:.6g} needs {total:.6g} W > budget {P_T:.6g} W")
    return powers


def feasibility_multi(ts: TransferSets, L_res: float, a_vec, rc: RadioConfig) -> FeasibilityRecord:
    """Feasible iff ``L_res > 0`` and the water-filling rate covers ``sum n_eff / L_res``.

    ``gain_threshold`` is reported as NaN: there is no scalar gain threshold
    with several subchannels.
    """
    if not ts.uplink:
        return FeasibilityRecord(L_res, 0.0, 0.0, L_res >= 0.0)
    if L_res <= 0.0:
        return FeasibilityRecord(L_res, math.nan, math.inf, False)
    required = math.fsum(effective_bits(e.state_bits, rc) for e in ts.uplink) / L_res
    best = waterfill(a_vec, rc.power_budget_w).rate_nats
    return FeasibilityRecord(L_res, math.nan, required, best >= required)


def solve_p4(uplink_n_eff: Iterable[float], a_vec, L_res: float, P_T: float) -> MultiAllocation:
    """Energy-minimal per-edge power vectors over shared subchannels.

    Writing ``P(R)`` for the least power reaching sum rate ``R``, edge ``i``
    costs ``n_i P(R_i) / R_i``. ``P`` is convex with ``P(0) = 0``, so the
    cost grows with ``R_i`` and the delay constraint binds; stationarity
    ``R P'(R) - P(R) = lam`` does not involve ``n_i`` and ``R P' - P`` is
    increasing, so all edges share the rate ``sum n / L_res``.
    """
    n = np.asarray(list(uplink_n_eff), dtype=float)
    a = np.asarray(a_vec, dtype=float).ravel()
    if n.size == 0:
        return MultiAllocation(np.empty((0, a.size)), np.empty((0, a.size)), 0.0, 0.0)
    if not L_res > 0:
        raise InfeasibleError("no latency left for the transfers")
    R = math.fsum(n) / L_res
    p = min_power_for_rate(a, R, P_T)
    rates = np.log1p(a * p)
    # lam = R P'(R) - P(R); P'(R) is the water level nu on the active set
    active = p > 0
    nu = float(np.mean(p[active] + 1.0 / a[active]))
    lam = R * nu - float(p.sum())
    return MultiAllocation(np.tile(p, (n.size, 1)), np.tile(rates, (n.size, 1)), R, lam)


def evaluate_partition_multi(g: CallGraph, asg: Assignment, a_vec,
                             rc: RadioConfig, cc: ComputeConfig) -> SolutionMulti:
    """Energy and delay of one partition over ``K`` subchannels."""
    asg.validate(g)
    ts = transfer_sets(g, asg)
    L_res = residual_latency(g, asg, cc)
    feas = feasibility_multi(ts, L_res, a_vec, rc)
    if not feas.feasible:
        return SolutionMulti(asg, INFEASIBLE, math.inf, math.inf, feasibility=feas)
    local = math.fsum(v.local_energy_joules for v in g.vertices if not asg.is_remote(v.id))
    eps = math.fsum(e.return_decode_energy_joules for e in ts.downlink)
    gam = math.fsum(e.return_decode_time_seconds for e in ts.downlink)
    n_eff = [effective_bits(e.state_bits, rc) for e in ts.uplink]
    alloc = solve_p4(n_eff, a_vec, L_res, rc.power_budget_w)
    energy, delay = [], []
    for ni, p, t in zip(n_eff, alloc.powers, alloc.rates):
        r = float(t.sum())
        energy.append(ni * float(p.sum()) / r)
        delay.append(ni / r)
    keys = [e.key for e in ts.uplink]
    return SolutionMulti(
        assignment=asg,
        status=OPTIMAL,
        total_energy_j=local + eps + math.fsum(energy),
        total_delay_s=compute_time(g, asg, cc) + gam + math.fsum(delay),
        power_w={k: p.copy() for k, p in zip(keys, alloc.powers)},
        rate_nats={k: t.copy() for k, t in zip(keys, alloc.rates)},
        bits_per_symbol={k: t / math.log(2.0) for k, t in zip(keys, alloc.rates)},
        latency_multiplier=alloc.multiplier,
        feasibility=feas,
    )
