"""Partition bookkeeping and the single-channel power allocation.

For a fixed partition every uplink edge ``i`` sends ``n_eff[i]`` second-nats
at rate ``t_i = ln(1 + a p_i)``. In the rate variables the allocation is

    minimize    sum_i n_eff[i] / a * (exp(t_i) - 1) / t_i
    subject to  sum_i n_eff[i] / t_i <= L_res,   0 < t_i <= ln(1 + a P_T)

which is strictly convex. :func:`solve_p2` solves it by bisection on the
latency multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import CallGraph, ComputeConfig, Edge, all_local_time
from .radio import RadioConfig, effective_bits

__all__ = [
    "Assignment",
    "FeasibilityRecord",
    "InfeasibleError",
    "RateAllocation",
    "SolutionSingle",
    "TransferSets",
    "evaluate_partition_single",
    "feasibility_single",
    "residual_latency",
    "solve_p2",
    "transfer_sets",
]

T_MIN = 1e-12
MAX_BISECTIONS = 200
NEWTON_TOL = 1e-12

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ALL_LOCAL = "all_local"


class InfeasibleError(ValueError):
    """The delay constraint cannot be met within the power budget."""


@dataclass(frozen=True)
class Assignment:
    """Set of procedures executed remotely (``I_v = 1``)."""

    remote: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "remote", frozenset(self.remote))

    @classmethod
    def from_mapping(cls, flags: Mapping[str, bool]) -> "Assignment":
        return cls(frozenset(v for v, r in flags.items() if r))

    @classmethod
    def from_mask(cls, g: CallGraph, mask: int) -> "Assignment":
        """Bit ``i`` of ``mask`` marks the i-th offloadable id (sorted) remote."""
        ids = g.offloadable_ids
        return cls(frozenset(v for i, v in enumerate(ids) if mask >> i & 1))

    def is_remote(self, vid: str) -> bool:
        return vid in self.remote

    def as_dict(self, g: CallGraph) -> dict[str, bool]:
        return {v.id: v.id in self.remote for v in g.vertices}

    def mask(self, g: CallGraph) -> int:
        return sum(1 << i for i, v in enumerate(g.offloadable_ids) if v in self.remote)

    def validate(self, g: CallGraph) -> None:
        for vid in self.remote:
            if not g.vertex(vid).offloadable:
                raise ValueError(f"vertex {vid!r} cannot be offloaded")

    def tie_key(self, g: CallGraph) -> tuple:
        """Fewer remote vertices first, then the smallest indicator vector."""
        return (len(self.remote), tuple(int(v in self.remote) for v in g.offloadable_ids))

    def __str__(self):
        return "{" + ",".join(sorted(self.remote)) + "}"


@dataclass(frozen=True)
class TransferSets:
    uplink: tuple[Edge, ...]
    downlink: tuple[Edge, ...]


@dataclass(frozen=True)
class FeasibilityRecord:
    residual_latency_s: float
    gain_threshold: float
    required_rate_nats: float
    feasible: bool


@dataclass(frozen=True)
class RateAllocation:
    """Solver output for one partition, ordered like the uplink edges."""

    rates: np.ndarray
    powers: np.ndarray
    multiplier: float
    iterations: int


@dataclass
class SolutionSingle:
    assignment: Assignment
    status: str
    total_energy_j: float
    total_delay_s: float
    power_w: dict = field(default_factory=dict)
    rate_nats: dict = field(default_factory=dict)
    bits_per_symbol: dict = field(default_factory=dict)
    latency_multiplier: float = 0.0
    feasibility: FeasibilityRecord | None = None


def transfer_sets(g: CallGraph, asg: Assignment) -> TransferSets:
    """Split the edges crossing the partition into uplink and downlink."""
    up, down = [], []
    for e in g.edges:
        ru, rv = asg.is_remote(e.source), asg.is_remote(e.target)
        if rv and not ru:
            up.append(e)
        elif ru and not rv:
            down.append(e)
    return TransferSets(tuple(up), tuple(down))


def compute_time(g: CallGraph, asg: Assignment, cc: ComputeConfig) -> float:
    # written as a correction to the all-local time so that the all-local
    # partition reproduces all_local_time bit for bit
    saved = math.fsum(g.vertex(v).cycles for v in asg.remote)
    return all_local_time(g, cc) - saved * (1.0 / cc.f_local_hz - 1.0 / cc.f_server_hz)


def residual_latency(g: CallGraph, asg: Assignment, cc: ComputeConfig) -> float:
    """Latency left for uplink transfers once compute and decode times are paid."""
    ts = transfer_sets(g, asg)
    decode = math.fsum(e.return_decode_time_seconds for e in ts.downlink)
    return cc.latency_budget_seconds - compute_time(g, asg, cc) - decode


def feasibility_single(ts: TransferSets, L_res: float, a: float, rc: RadioConfig) -> FeasibilityRecord:
    """Closed-form feasibility test for one channel gain ``a``.

    Feasible iff ``L_res > 0`` and ``a >= (exp(sum n_eff / L_res) - 1) / P_T``;
    with no uplink edge only ``L_res >= 0`` is needed.
    """
    if not ts.uplink:
        return FeasibilityRecord(L_res, 0.0, 0.0, L_res >= 0.0)
    if L_res <= 0.0:
        return FeasibilityRecord(L_res, math.inf, math.inf, False)
    required = math.fsum(effective_bits(e.state_bits, rc) for e in ts.uplink) / L_res
    # exp overflows past ~709 nats; such a threshold is infinite for any float gain
    threshold = math.expm1(required) / rc.power_budget_w if required < 700.0 else math.inf
    return FeasibilityRecord(L_res, threshold, required, a >= threshold)


# -- convex rate allocation ----------------------------------------------------

def _h(t: float) -> float:
    """``exp(t) (t - 1) + 1``, accurate near zero."""
    if t < 1e-3:
        return t * t * (0.5 + t * (1.0 / 3.0 + t * (0.125 + t * (1.0 / 30.0 + t / 144.0))))
    return t * math.exp(t) - math.expm1(t)


def _stationary_rate(target: float, t0: float, t_max: float) -> float:
    """Solve ``_h(t) = target`` on ``[T_MIN, t_max]`` by safeguarded Newton.

    ``_h`` is increasing and convex, so Newton is monotone once it lands
    right of the root; a bracket keeps it inside the box otherwise.
    """
    if target <= _h(T_MIN):
        return T_MIN
    if target >= _h(t_max):
        return t_max
    lo, hi = T_MIN, t_max
    t = min(max(t0, lo), hi)
    for _ in range(100):
        r = _h(t) - target
        if abs(r) <= NEWTON_TOL * target:
            return t
        if r > 0:
            hi = t
        else:
            lo = t
        step = r / (t * math.exp(t))
        t_new = t - step
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-16 * t:
            return t_new
        t = t_new
    return t


def solve_p2(uplink_n_eff: Iterable[float], a, L_res: float, P_T: float,
             check: bool = True) -> RateAllocation:
    """Energy-minimal rates for the uplink edges of one partition.

    Bisection runs on the latency multiplier ``lam``. For a given ``lam``
    edge ``i`` minimizes ``n_i/a_i (e^t - 1)/t + lam n_i / t`` over
    ``(0, ln(1 + a_i P_T)]``; its stationarity condition
    ``e^t (t - 1) + 1 = lam a_i`` does not involve ``n_i``, so edges that
    share a gain share a rate and are solved once. The multiplier is bisected
    geometrically until the delay constraint holds with slack below
    ``1e-9 L_res``.

    Parameters
    ----------
    uplink_n_eff : iterable of float
        Effective bits of every uplink edge.
    a : float or array_like
        Normalized channel gain, common to all edges or one per edge.
    L_res : float
        Residual latency available for the transfers.
    P_T : float
        Power budget per edge.
    check : bool
        Raise :class:`InfeasibleError` when no allocation within the budget
        meets the delay constraint. With ``check=False`` the rates saturate
        at ``ln(1 + a P_T)`` and the returned point may violate it.
    """
    n = np.asarray(list(uplink_n_eff), dtype=float)
    if n.size == 0:
        return RateAllocation(np.empty(0), np.empty(0), 0.0, 0)
    gains = np.broadcast_to(np.asarray(a, dtype=float), n.shape)
    groups = sorted(set(gains.tolist()))
    weight = [math.fsum(n[gains == g]) for g in groups]
    t_max = [math.log1p(g * P_T) for g in groups]

    def delay(ts):
        return math.fsum(w / t for w, t in zip(weight, ts))

    if check and not (L_res > 0 and delay(t_max) <= L_res):
        raise InfeasibleError(f"delay at full power {delay(t_max):.6g} s exceeds {L_res:.6g} s")

    def rates_at(lam, start):
        return [_stationary_rate(lam * g, t0, tm) for g, t0, tm in zip(groups, start, t_max)]

    tol = 1e-9 * L_res if L_res > 0 else 0.0
    iterations = 0
    lam_hi = max(_h(tm) / g for g, tm in zip(groups, t_max))
    t_hi = list(t_max)
    lam_lo = min(_h(T_MIN) / g for g in groups)
    t_lo = [T_MIN] * len(groups)
    if L_res <= 0 or delay(t_hi) >= L_res - tol:
        # boundary or infeasible: every edge at full power
        t, lam = t_hi, lam_hi
    elif delay(t_lo) <= L_res:
        t, lam = t_lo, 0.0
    else:
        t = t_hi
        while iterations < MAX_BISECTIONS:
            iterations += 1
            mid = math.sqrt(lam_lo * lam_hi)
            t_mid = rates_at(mid, t)
            d = delay(t_mid)
            if d > L_res:
                lam_lo = mid
            else:
                lam_hi, t_hi = mid, t_mid
                if L_res - d <= tol:
                    break
            t = t_mid
        t, lam = t_hi, lam_hi
    by_gain = dict(zip(groups, t))
    rates = np.array([by_gain[g] for g in gains.tolist()])
    powers = np.expm1(rates) / gains
    return RateAllocation(rates, powers, lam, iterations)


def evaluate_partition_single(g: CallGraph, asg: Assignment, a: float,
                              rc: RadioConfig, cc: ComputeConfig) -> SolutionSingle:
    """Energy and delay of one partition with optimally chosen uplink powers."""
    asg.validate(g)
    ts = transfer_sets(g, asg)
    L_res = residual_latency(g, asg, cc)
    feas = feasibility_single(ts, L_res, a, rc)
    if not feas.feasible:
        return SolutionSingle(asg, INFEASIBLE, math.inf, math.inf, feasibility=feas)
    local = math.fsum(v.local_energy_joules for v in g.vertices if not asg.is_remote(v.id))
    eps = math.fsum(e.return_decode_energy_joules for e in ts.downlink)
    gam = math.fsum(e.return_decode_time_seconds for e in ts.downlink)
    n_eff = [effective_bits(e.state_bits, rc) for e in ts.uplink]
    alloc = solve_p2(n_eff, a, L_res, rc.power_budget_w)
    transfer_e = [ni * p / t for ni, p, t in zip(n_eff, alloc.powers, alloc.rates)]
    transfer_d = [ni / t for ni, t in zip(n_eff, alloc.rates)]
    keys = [e.key for e in ts.uplink]
    return SolutionSingle(
        assignment=asg,
        status=OPTIMAL,
        total_energy_j=local + eps + math.fsum(transfer_e),
        total_delay_s=compute_time(g, asg, cc) + gam + math.fsum(transfer_d),
        power_w=dict(zip(keys, map(float, alloc.powers))),
        rate_nats=dict(zip(keys, map(float, alloc.rates))),
        bits_per_symbol={k: float(t) / math.log(2.0) for k, t in zip(keys, alloc.rates)},
        latency_multiplier=alloc.multiplier,
        feasibility=feas,
    )
